//! Vote tallies, human labels and agreement with corpus and model.

use std::collections::BTreeSet;

use orderlab_core::stats::pearson;
use serde::{Deserialize, Serialize};

use crate::log::{effective_judgments, Choice, JudgmentRecord};
use crate::pool::StimulusItem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub item_id: u64,
    pub votes: usize,
    pub votes_reference: usize,
    /// 1 iff strictly more than half the votes chose the reference; absent
    /// without votes.
    pub human_label: Option<u8>,
    pub model_chose_reference: bool,
}

/// Percentages and correlations cover judged items only; all are absent
/// when nothing has been judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsSummary {
    pub items: Vec<ItemResult>,
    pub judged_items: usize,
    pub participants: usize,
    pub judgments: usize,
    pub human_corpus_pct: Option<f64>,
    pub model_corpus_pct: Option<f64>,
    pub model_human_pct: Option<f64>,
    /// Correlations over sentence-level indicators: each judged item
    /// contributes its reference and its variant, each marked 1 if chosen.
    pub pearson_model_human: Option<f64>,
    pub pearson_model_corpus: Option<f64>,
    pub pearson_human_corpus: Option<f64>,
}

pub fn human_label(votes_reference: usize, votes: usize) -> Option<u8> {
    (votes > 0).then(|| u8::from(2 * votes_reference > votes))
}

/// Results from the raw record sequence; later records for the same
/// `(participant, item)` replace earlier ones and unknown items are ignored.
pub fn compute_results(pool: &[StimulusItem], seed: u64, records: &[JudgmentRecord]) -> ResultsSummary {
    let effective = effective_judgments(records);
    let mut items: Vec<ItemResult> = pool
        .iter()
        .map(|it| ItemResult {
            item_id: it.item_id,
            votes: 0,
            votes_reference: 0,
            human_label: None,
            model_chose_reference: it.model_chose_reference,
        })
        .collect();
    let mut participants = BTreeSet::new();
    let mut judgments = 0;
    for ((participant, item_id), choice) in &effective {
        let Ok(k) = pool.binary_search_by_key(item_id, |it| it.item_id) else { continue };
        let reference_is_a = pool[k].reference_is_a(seed);
        items[k].votes += 1;
        if (*choice == Choice::A) == reference_is_a {
            items[k].votes_reference += 1;
        }
        participants.insert(participant.as_str());
        judgments += 1;
    }
    for it in &mut items {
        it.human_label = human_label(it.votes_reference, it.votes);
    }

    let judged: Vec<&ItemResult> = items.iter().filter(|it| it.human_label.is_some()).collect();
    let pct = |hits: usize| (!judged.is_empty()).then(|| 100.0 * hits as f64 / judged.len() as f64);
    let human: Vec<bool> = judged.iter().map(|it| it.human_label == Some(1)).collect();
    let model: Vec<bool> = judged.iter().map(|it| it.model_chose_reference).collect();
    let expand = |chose_reference: &[bool]| -> Vec<f64> {
        chose_reference.iter().flat_map(|&r| if r { [1.0, 0.0] } else { [0.0, 1.0] }).collect()
    };
    let corpus = expand(&vec![true; judged.len()]);
    ResultsSummary {
        judged_items: judged.len(),
        participants: participants.len(),
        judgments,
        human_corpus_pct: pct(human.iter().filter(|&&h| h).count()),
        model_corpus_pct: pct(model.iter().filter(|&&m| m).count()),
        model_human_pct: pct(human.iter().zip(&model).filter(|(h, m)| h == m).count()),
        pearson_model_human: pearson(&expand(&model), &expand(&human)),
        pearson_model_corpus: pearson(&expand(&model), &corpus),
        pearson_human_corpus: pearson(&expand(&human), &corpus),
        items,
    }
}
