//! Generator for small verb-final treebanks with case-marked constituents,
//! used for end-to-end runs where no real treebank is at hand.
//!
//! Every sentence is a root verb preceded by two to four constituents drawn
//! from subject (`k1`), indirect object (`k4`), direct object (`k2`), time
//! (`k7t`) and instrument (`k3`) templates in a fixed canonical order, and
//! followed by an auxiliary. In treebank sentences one time in four a pair of
//! adjacent constituents is swapped, so that non-canonical orders are attested
//! alongside canonical ones. Constituents may carry an adjective and a case
//! marker (`lwg_psp`). Consecutive sentences of a document reuse nouns so
//! that context effects have something to pick up.

use crate::corpus::{DependencyTree, Document, Token};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub sentences_per_document: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { documents: 20, sentences_per_document: 5, seed: 13 }
    }
}

struct Slot {
    rel: &'static str,
    nouns: &'static [(&'static str, &'static str)],
    marker: Option<&'static str>,
}

const PEOPLE: &[(&str, &str)] = &[
    ("raam", "PROPN"),
    ("siitaa", "PROPN"),
    ("mohan", "PROPN"),
    ("sarkaar", "NOUN"),
    ("adhyaapak", "NOUN"),
    ("kisaan", "NOUN"),
];
const RECIPIENTS: &[(&str, &str)] = &[("bachchon", "NOUN"), ("dost", "NOUN"), ("mantri", "NOUN"), ("logon", "NOUN")];
const THINGS: &[(&str, &str)] = &[
    ("kitaab", "NOUN"),
    ("patr", "NOUN"),
    ("paisa", "NOUN"),
    ("khaana", "NOUN"),
    ("ghar", "NOUN"),
    ("suchna", "NOUN"),
];
const TIMES: &[(&str, &str)] = &[("kal", "ADV"), ("aaj", "ADV"), ("sukravar", "NOUN"), ("subah", "NOUN")];
const MEANS: &[(&str, &str)] = &[("daak", "NOUN"), ("gaadi", "NOUN"), ("haath", "NOUN")];
const ADJECTIVES: &[&str] = &["nayi", "puraani", "badi", "achchhi"];
/// (lemma, past form)
const VERBS: &[(&str, &str)] = &[
    ("de", "diya"),
    ("bhej", "bheja"),
    ("kar", "kiya"),
    ("kah", "kaha"),
    ("bech", "becha"),
    ("likh", "likha"),
    ("saup", "saunpa"),
];

fn slots() -> [Slot; 5] {
    [
        Slot { rel: "k7t", nouns: TIMES, marker: None },
        Slot { rel: "k1", nouns: PEOPLE, marker: Some("ne") },
        Slot { rel: "k4", nouns: RECIPIENTS, marker: Some("ko") },
        Slot { rel: "k2", nouns: THINGS, marker: None },
        Slot { rel: "k3", nouns: MEANS, marker: Some("se") },
    ]
}

/// A document-structured treebank, mostly in canonical constituent order.
pub fn generate_treebank(cfg: &SyntheticConfig) -> Vec<Document> {
    (0..cfg.documents)
        .map(|d| {
            let doc_id = format!("doc{}", d + 1);
            let mut rng = SplitMix64::for_item(cfg.seed, &doc_id);
            let mut previous: Vec<&'static str> = Vec::new();
            let sentences = (0..cfg.sentences_per_document)
                .map(|s| {
                    let sid = format!("{doc_id}.s{}", s + 1);
                    let tree = generate_sentence(&mut rng, &doc_id, &sid, &previous, true);
                    previous = tree.tokens().iter().map(|t| lexeme(&t.lemma)).collect();
                    tree
                })
                .collect();
            Document { doc_id, sentences }
        })
        .collect()
}

/// Plain canonical-order sentences for language-model training.
pub fn generate_lm_corpus(sentences: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = SplitMix64::for_item(seed, "lm-corpus");
    let mut previous: Vec<&'static str> = Vec::new();
    (0..sentences)
        .map(|i| {
            let tree = generate_sentence(&mut rng, "lm", &format!("lm{i}"), &previous, false);
            previous = tree.tokens().iter().map(|t| lexeme(&t.lemma)).collect();
            tree.forms().into_iter().map(str::to_string).collect()
        })
        .collect()
}

fn lexeme(lemma: &str) -> &'static str {
    let all = PEOPLE.iter().chain(RECIPIENTS).chain(THINGS).chain(TIMES).chain(MEANS);
    all.map(|(w, _)| *w).find(|w| *w == lemma).unwrap_or("")
}

fn pick<T: Copy>(rng: &mut SplitMix64, xs: &[T]) -> T {
    xs[rng.below(xs.len() as u64) as usize]
}

fn generate_sentence(
    rng: &mut SplitMix64,
    doc_id: &str,
    sid: &str,
    previous: &[&'static str],
    scramble: bool,
) -> DependencyTree {
    let slots = slots();
    // Subject plus one to three of the other slots.
    let mut chosen = vec![false; slots.len()];
    chosen[1] = true;
    let extra = 1 + rng.below(3) as usize;
    let mut others: Vec<usize> = vec![0, 2, 3, 4];
    rng.shuffle(&mut others);
    for &o in &others[..extra] {
        chosen[o] = true;
    }
    let (verb_lemma, verb_form) = pick(rng, VERBS);
    let mut order: Vec<usize> = (0..slots.len()).filter(|&k| chosen[k]).collect();
    // Draws happen only when scrambling, so canonical corpora are unaffected.
    if scramble && rng.below(4) == 0 {
        let i = rng.below(order.len() as u64 - 1) as usize;
        order.swap(i, i + 1);
    }

    // (form, lemma, upos, rel-to-parent, parent: None = root verb, Some(i) = token i)
    let mut words: Vec<(String, String, String, String, Option<usize>)> = Vec::new();
    for &k in &order {
        let slot = &slots[k];
        let reuse: Vec<(&str, &str)> = slot.nouns.iter().copied().filter(|(w, _)| previous.contains(w)).collect();
        let (noun, upos) =
            if !reuse.is_empty() && rng.below(2) == 0 { pick(rng, &reuse) } else { pick(rng, slot.nouns) };
        let noun_at = words.len() + usize::from(slot.rel == "k2" && rng.below(3) == 0);
        if noun_at > words.len() {
            let adj = pick(rng, ADJECTIVES);
            words.push((adj.into(), adj.into(), "ADJ".into(), "nmod__adj".into(), Some(noun_at)));
        }
        words.push((noun.into(), noun.into(), upos.into(), slot.rel.into(), None));
        if let Some(m) = slot.marker {
            words.push((m.into(), m.into(), "ADP".into(), "lwg_psp".into(), Some(noun_at)));
        }
    }
    let verb_at = words.len();
    words.push((verb_form.into(), verb_lemma.into(), "VERB".into(), "root".into(), None));
    words.push(("tha".into(), "hai".into(), "AUX".into(), "lwg_vaux".into(), Some(verb_at)));

    let tokens = words
        .into_iter()
        .enumerate()
        .map(|(i, (form, lemma, upos, rel, parent))| {
            let head = if i == verb_at { 0 } else { parent.map(|p| p + 1).unwrap_or(verb_at + 1) };
            Token::new(i + 1, &form, &lemma, &upos, head, &rel)
        })
        .collect();
    DependencyTree::new(doc_id, sid, tokens).expect("generated trees are projective")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variantgen::preverbal_constituents;

    #[test]
    fn trees_are_verb_final_with_constituents() {
        let docs = generate_treebank(&SyntheticConfig { documents: 3, sentences_per_document: 10, seed: 1 });
        for t in docs.iter().flat_map(|d| &d.sentences) {
            let n = preverbal_constituents(t).len();
            assert!((2..=4).contains(&n), "{n}");
            assert_eq!(t.root_index(), t.len() - 1);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig::default();
        assert_eq!(generate_treebank(&cfg), generate_treebank(&cfg));
        assert_eq!(generate_lm_corpus(50, 2), generate_lm_corpus(50, 2));
    }

    #[test]
    fn some_treebank_sentences_are_scrambled() {
        let docs = generate_treebank(&SyntheticConfig::default());
        let rank = |r: &str| ["k7t", "k1", "k4", "k2", "k3"].iter().position(|x| *x == r).unwrap();
        let scrambled = docs
            .iter()
            .flat_map(|d| &d.sentences)
            .filter(|t| {
                let rels: Vec<usize> = preverbal_constituents(t).iter().map(|c| rank(&c.deprel)).collect();
                rels.windows(2).any(|w| w[0] > w[1])
            })
            .count();
        assert!(scrambled > 0 && scrambled < 50, "{scrambled}");
    }
}
