use orderlab_evalsvc::{compute_results, Choice, JudgmentRecord, StimulusItem};
use proptest::prelude::*;

fn pool(n: u64, model: &[bool]) -> Vec<StimulusItem> {
    (1..=n)
        .map(|i| StimulusItem {
            item_id: i,
            context: format!("c{i}"),
            reference: format!("r{i}"),
            variant: format!("v{i}"),
            model_chose_reference: model[(i - 1) as usize],
        })
        .collect()
}

proptest! {
    #[test]
    fn results_match_a_direct_tally(
        model in prop::collection::vec(any::<bool>(), 6),
        events in prop::collection::vec((0u8..5, 1u64..=6, any::<bool>()), 0..80),
        seed in any::<u64>(),
    ) {
        let pool = pool(6, &model);
        let records: Vec<JudgmentRecord> = events
            .iter()
            .enumerate()
            .map(|(t, &(p, item, a))| JudgmentRecord {
                participant: format!("p{p}"),
                item_id: item,
                choice: if a { Choice::A } else { Choice::B },
                timestamp_ms: t as u64,
            })
            .collect();
        let r = compute_results(&pool, seed, &records);

        // Last event per (participant, item), scanning backwards.
        let mut votes = [0usize; 6];
        let mut for_ref = [0usize; 6];
        let mut seen = std::collections::HashSet::new();
        for &(p, item, a) in events.iter().rev() {
            if seen.insert((p, item)) {
                let k = (item - 1) as usize;
                votes[k] += 1;
                if a == pool[k].reference_is_a(seed) {
                    for_ref[k] += 1;
                }
            }
        }
        prop_assert_eq!(r.judgments, seen.len());
        let mut judged = 0;
        let (mut hc, mut mc, mut mh) = (0, 0, 0);
        for k in 0..6 {
            prop_assert_eq!(r.items[k].votes, votes[k]);
            prop_assert_eq!(r.items[k].votes_reference, for_ref[k]);
            if votes[k] == 0 {
                prop_assert_eq!(r.items[k].human_label, None);
                continue;
            }
            let h = 2 * for_ref[k] > votes[k];
            prop_assert_eq!(r.items[k].human_label, Some(u8::from(h)));
            judged += 1;
            hc += usize::from(h);
            mc += usize::from(model[k]);
            mh += usize::from(h == model[k]);
        }
        prop_assert_eq!(r.judged_items, judged);
        if judged == 0 {
            prop_assert_eq!(r.human_corpus_pct, None);
        } else {
            let pct = |x: usize| 100.0 * x as f64 / judged as f64;
            prop_assert_eq!(r.human_corpus_pct, Some(pct(hc)));
            prop_assert_eq!(r.model_corpus_pct, Some(pct(mc)));
            prop_assert_eq!(r.model_human_pct, Some(pct(mh)));
        }
        for v in [r.pearson_model_human, r.pearson_model_corpus, r.pearson_human_corpus].into_iter().flatten() {
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }
}
