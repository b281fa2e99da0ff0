use orderlab_core::corpus::{parse_treebank, write_conll, ColumnMap, DependencyTree, Document, Token};
use orderlab_core::features::{dependency_length, sign_sum, Givenness};
use orderlab_core::rng::SplitMix64;
use orderlab_core::variantgen::{
    generate_variants, parse_variant_records, preverbal_constituents, set_from_records, AttestedGrammar,
};
use proptest::prelude::*;
use std::collections::BTreeSet;

const RELS: [&str; 5] = ["k1", "k2", "k4", "k7t", "k3"];

/// Verb-final tree from `(adjective?, marker?, relation)` per constituent,
/// with unique forms and a postverbal auxiliary.
fn verb_final(spec: &[(bool, bool, usize)]) -> DependencyTree {
    let mut rows: Vec<(String, String, Option<usize>)> = Vec::new();
    for (c, &(adj, marker, rel)) in spec.iter().enumerate() {
        let noun_at = rows.len() + usize::from(adj);
        if adj {
            rows.push((format!("adj{c}"), "nmod__adj".into(), Some(noun_at)));
        }
        rows.push((format!("n{c}"), RELS[rel].into(), None));
        if marker {
            rows.push((format!("m{c}"), "lwg_psp".into(), Some(noun_at)));
        }
    }
    let verb = rows.len();
    rows.push(("v".into(), "root".into(), None));
    rows.push(("aux".into(), "lwg_vaux".into(), Some(verb)));
    let tokens = rows
        .into_iter()
        .enumerate()
        .map(|(i, (form, rel, parent))| {
            let head = if i == verb { 0 } else { parent.map_or(verb + 1, |p| p + 1) };
            Token::new(i + 1, &form, &form, "NOUN", head, &rel)
        })
        .collect();
    DependencyTree::new("d", "s1", tokens).unwrap()
}

fn spec_strategy(lo: usize, hi: usize) -> impl Strategy<Value = Vec<(bool, bool, usize)>> {
    prop::collection::vec((any::<bool>(), any::<bool>(), 0..RELS.len()), lo..=hi)
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Heads of a random projective tree over `1..=n`: each span picks a root and
/// splits the rest on both sides into contiguous subtrees.
fn projective_heads(n: usize, seed: u64) -> Vec<usize> {
    fn build(lo: usize, hi: usize, parent: usize, heads: &mut [usize], rng: &mut SplitMix64) {
        if lo > hi {
            return;
        }
        let r = lo + rng.below((hi - lo + 1) as u64) as usize;
        heads[r - 1] = parent;
        for (a, b) in [(lo, r.wrapping_sub(1)), (r + 1, hi)] {
            let mut start = a;
            while b != usize::MAX && start <= b {
                let end = start + rng.below((b - start + 1) as u64) as usize;
                build(start, end, r, heads, rng);
                start = end + 1;
            }
        }
    }
    let mut heads = vec![0; n];
    build(1, n, 0, &mut heads, &mut SplitMix64::new(seed));
    heads
}

fn tree_from_heads(heads: &[usize]) -> DependencyTree {
    let tokens = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            Token::new(i + 1, &format!("w{i}"), &format!("w{i}"), "X", h, if h == 0 { "root" } else { "dep" })
        })
        .collect();
    DependencyTree::new("d", "s", tokens).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permissive_grammar_yields_every_other_permutation(spec in spec_strategy(2, 5)) {
        let tree = verb_final(&spec);
        let set = generate_variants(&tree, None, &AttestedGrammar::permissive(), 1000, 1).unwrap();
        prop_assert_eq!(set.variants.len(), factorial(spec.len()) - 1);
        prop_assert_eq!(set.filtered_out, 0);
        prop_assert_eq!(set.duplicates_dropped, 0);
    }

    #[test]
    fn variants_permute_whole_blocks(spec in spec_strategy(2, 5)) {
        let tree = verb_final(&spec);
        let constituents = preverbal_constituents(&tree);
        let set = generate_variants(&tree, None, &AttestedGrammar::permissive(), 1000, 2).unwrap();
        let mut reference: Vec<&str> = tree.forms();
        reference.sort_unstable();
        let mut surfaces = BTreeSet::new();
        surfaces.insert(tree.forms().join(" "));
        for v in &set.variants {
            let mut forms = set.variant_forms(v);
            prop_assert!(surfaces.insert(forms.join(" ")), "duplicate surface");
            // Each constituent occupies a contiguous run, in the stated order.
            let mut at = 0;
            for &c in &v.order {
                let span: Vec<usize> = constituents[c].positions().collect();
                prop_assert_eq!(&v.tokens[at..at + span.len()], &span[..]);
                at += span.len();
            }
            // Verb and postverbal material keep their positions.
            prop_assert_eq!(&v.tokens[at..], &(at + 1..=tree.len()).collect::<Vec<_>>()[..]);
            forms.sort_unstable();
            prop_assert_eq!(&forms, &reference);
        }
    }

    #[test]
    fn filter_keeps_only_attested_bigrams(spec in spec_strategy(2, 5), mask in any::<u32>()) {
        let tree = verb_final(&spec);
        let mut pairs = Vec::new();
        for (i, a) in RELS.iter().enumerate() {
            for (j, b) in RELS.iter().enumerate() {
                if mask >> (i * 5 + j) & 1 == 1 {
                    pairs.push((*a, *b));
                }
            }
        }
        let grammar = AttestedGrammar::from_bigrams(pairs);
        let set = generate_variants(&tree, None, &grammar, 1000, 3).unwrap();
        let constituents = preverbal_constituents(&tree);
        for v in &set.variants {
            let labels: Vec<&str> = v.order.iter().map(|&c| constituents[c].deprel.as_str()).collect();
            prop_assert!(grammar.allows(&labels));
        }
        prop_assert_eq!(set.variants.len() + set.filtered_out + set.duplicates_dropped, factorial(spec.len()) - 1);
    }

    #[test]
    fn cap_bounds_and_seeds_the_sample(spec in spec_strategy(4, 5), cap in 2usize..20, seed in any::<u64>()) {
        let tree = verb_final(&spec);
        let g = AttestedGrammar::permissive();
        let a = generate_variants(&tree, None, &g, cap, seed).unwrap();
        let b = generate_variants(&tree, None, &g, cap, seed).unwrap();
        prop_assert_eq!(a.variants.len(), cap - 1);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn variant_records_round_trip(spec in spec_strategy(2, 4)) {
        let tree = verb_final(&spec);
        let set = generate_variants(&tree, None, &AttestedGrammar::permissive(), 100, 4).unwrap();
        let records = parse_variant_records(&set.to_records()).unwrap();
        prop_assert_eq!(records.len(), set.variants.len() + 1);
        let refs: Vec<_> = records.iter().collect();
        let rebuilt = set_from_records(&tree, None, &refs, 4).unwrap();
        prop_assert_eq!(rebuilt.variants, set.variants);
    }

    #[test]
    fn conll_round_trip(spec in spec_strategy(2, 5)) {
        let tree = verb_final(&spec);
        let set = generate_variants(&tree, None, &AttestedGrammar::permissive(), 5, 5).unwrap();
        let mut sentences = vec![tree.clone()];
        sentences.extend(set.variants.iter().enumerate().map(|(i, v)| {
            set.variant_tree(v).reordered(&(1..=tree.len()).collect::<Vec<_>>(), format!("v{i}")).unwrap()
        }));
        let docs = vec![Document { doc_id: "d".into(), sentences }];
        let parsed = parse_treebank(write_conll(&docs).as_bytes(), &ColumnMap::default()).unwrap();
        prop_assert_eq!(parsed.report.rejected(), 0);
        prop_assert_eq!(parsed.documents, docs);
    }

    #[test]
    fn dependency_length_matches_per_arc_count(n in 1usize..30, seed in any::<u64>()) {
        let heads = projective_heads(n, seed);
        let tree = tree_from_heads(&heads);
        let mut brute = 0u64;
        for (i, &h) in heads.iter().enumerate() {
            if h == 0 {
                continue;
            }
            let d = i + 1;
            brute += (1..=n).filter(|&p| p > d.min(h) && p < d.max(h)).count() as u64;
        }
        prop_assert_eq!(dependency_length(&tree), brute);
    }

    #[test]
    fn variant_trees_keep_arcs(spec in spec_strategy(2, 4)) {
        let tree = verb_final(&spec);
        let set = generate_variants(&tree, None, &AttestedGrammar::permissive(), 100, 6).unwrap();
        let arcs = |t: &DependencyTree| -> BTreeSet<(String, String, String)> {
            t.tokens()
                .iter()
                .map(|x| {
                    let h = if x.head == 0 { "ROOT".to_string() } else { t.token(x.head).form.clone() };
                    (x.form.clone(), h, x.deprel.clone())
                })
                .collect()
        };
        for v in &set.variants {
            prop_assert_eq!(arcs(&set.variant_tree(v)), arcs(&tree));
        }
    }

    #[test]
    fn is_score_is_antisymmetric(tags in prop::collection::vec(any::<bool>(), 0..8)) {
        let tags: Vec<Givenness> = tags.into_iter().map(|g| if g { Givenness::Given } else { Givenness::New }).collect();
        let mut rev = tags.clone();
        rev.reverse();
        prop_assert_eq!(sign_sum(&rev), -sign_sum(&tags));
    }
}

/// Reference `amar ujala-ko yah sukravar-ko daak-se prapt hua`: root
/// dependents k4, k1, k7t, k3 in that order.
#[test]
fn attested_bigrams_follow_linear_order_of_root_dependents() {
    let rows = [
        ("amar", 2, "pof"),
        ("ujala-ko", 6, "k4"),
        ("yah", 6, "k1"),
        ("sukravar-ko", 6, "k7t"),
        ("daak-se", 6, "k3"),
        ("prapt", 0, "root"),
        ("hua", 6, "lwg_vaux"),
    ];
    let tokens = rows.iter().enumerate().map(|(i, &(f, h, r))| Token::new(i + 1, f, f, "NOUN", h, r)).collect();
    let tree = DependencyTree::new("d", "s1", tokens).unwrap();
    let docs = [Document { doc_id: "d".into(), sentences: vec![tree] }];
    let g = orderlab_core::variantgen::build_attested_grammar(&docs).unwrap();
    for (a, b) in [("k4", "k1"), ("k1", "k7t"), ("k7t", "k3")] {
        assert!(g.contains(a, b), "({a},{b})");
    }
    assert!(!g.contains("k1", "k4"));
    assert!(g.allows(&["k4", "k1", "k7t", "k3"]));
    assert!(!g.allows(&["k1", "k4", "k7t", "k3"]));
}
