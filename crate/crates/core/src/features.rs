//! Per-sentence predictors: dependency length, information status and the
//! five surprisal totals, plus ingestion of externally computed columns.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

use crate::corpus::{lemma_set, DependencyTree};
use crate::lstm::{adapt_and_score, lstm_sentence_surprisal, AdaptationConfig, LstmLm};
use crate::ngram::{CacheState, TrigramLm, DEFAULT_CACHE_WEIGHT};
use crate::variantgen::VariantSet;

/// Column order of feature vectors, deltas and feature tables.
pub const FEATURE_NAMES: [&str; 7] =
    ["trigram_surp", "dep_length", "pcfg_surp", "is_score", "lstm_surp", "adaptive_lstm_surp", "lex_rept_surp"];

pub const FEATURE_TABLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("external column has no value for {0}")]
    MissingExternal(String),
    #[error("duplicate id {id} at row {row}")]
    DuplicateId { id: String, row: usize },
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub trigram_surp: f64,
    pub dep_length: u64,
    pub pcfg_surp: f64,
    pub is_score: i8,
    pub lstm_surp: f64,
    pub adaptive_lstm_surp: f64,
    pub lex_rept_surp: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.trigram_surp,
            self.dep_length as f64,
            self.pcfg_surp,
            f64::from(self.is_score),
            self.lstm_surp,
            self.adaptive_lstm_surp,
            self.lex_rept_surp,
        ]
    }

    /// Column index of a feature name.
    pub fn index_of(name: &str) -> Option<usize> {
        FEATURE_NAMES.iter().position(|n| *n == name)
    }
}

/// Sum over non-root tokens of the number of words between head and dependent.
pub fn dependency_length(tree: &DependencyTree) -> u64 {
    tree.tokens().iter().filter(|t| t.head != 0).map(|t| (t.index.abs_diff(t.head) - 1) as u64).sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsConfig {
    pub relations: BTreeSet<String>,
    pub content_pos: BTreeSet<String>,
    pub pronoun_pos: String,
}

impl Default for IsConfig {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            relations: set(&["k1", "k2", "k4"]),
            content_pos: set(&["NOUN", "PROPN", "VERB", "ADJ", "ADV"]),
            pronoun_pos: "PRON".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Givenness {
    Given,
    New,
}

/// Given/New tags of the root's subject and object dependents in linear order.
pub fn givenness_tags(target: &DependencyTree, context: Option<&DependencyTree>, cfg: &IsConfig) -> Vec<Givenness> {
    let mentioned = context.map(|c| lemma_set(c, &cfg.content_pos)).unwrap_or_default();
    let mut tagged: Vec<(usize, Givenness)> = target
        .children(target.root_index())
        .filter(|t| cfg.relations.contains(&t.deprel))
        .map(|head| {
            let (lo, hi) = target.subtree_span(head.index);
            let repeated = (lo..=hi)
                .map(|i| target.token(i))
                .any(|t| cfg.content_pos.contains(&t.upos) && mentioned.contains(&t.lemma_or_form().to_lowercase()));
            let tag = if repeated || head.upos == cfg.pronoun_pos { Givenness::Given } else { Givenness::New };
            (lo, tag)
        })
        .collect();
    tagged.sort_by_key(|&(lo, _)| lo);
    tagged.into_iter().map(|(_, g)| g).collect()
}

/// Sign of the sum over ordered pairs of tagged constituents, counting +1 for
/// Given before New and -1 for New before Given.
pub fn is_score(target: &DependencyTree, context: Option<&DependencyTree>, cfg: &IsConfig) -> i8 {
    sign_sum(&givenness_tags(target, context, cfg))
}

pub fn sign_sum(tags: &[Givenness]) -> i8 {
    let mut sum: i64 = 0;
    for (i, a) in tags.iter().enumerate() {
        for b in &tags[i + 1..] {
            match (a, b) {
                (Givenness::Given, Givenness::New) => sum += 1,
                (Givenness::New, Givenness::Given) => sum -= 1,
                _ => {}
            }
        }
    }
    sum.signum() as i8
}

/// Externally computed per-sentence values, keyed by row id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalColumn {
    values: HashMap<String, f64>,
}

impl ExternalColumn {
    /// Reads `id<TAB>value` rows; blank lines and `#` lines are skipped.
    pub fn read(input: impl BufRead) -> Result<Self, FeatureError> {
        let mut values = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let row = i + 1;
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, value) = line
                .split_once('\t')
                .ok_or_else(|| FeatureError::Parse { row, message: "expected id<TAB>value".into() })?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| FeatureError::Parse { row, message: format!("non-numeric value {value:?}") })?;
            if values.insert(id.to_string(), v).is_some() {
                return Err(FeatureError::DuplicateId { id: id.to_string(), row });
            }
        }
        Ok(Self { values })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self { values: pairs.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }

    /// Fraction of `ids` that have a value.
    pub fn coverage<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> f64 {
        let (mut hit, mut n) = (0usize, 0usize);
        for id in ids {
            n += 1;
            hit += usize::from(self.values.contains_key(id));
        }
        if n == 0 {
            1.0
        } else {
            hit as f64 / n as f64
        }
    }
}

/// Row id used to look up external values: `sentence_id:variant_id`.
pub fn row_key(sentence_id: &str, variant_id: usize) -> String {
    format!("{sentence_id}:{variant_id}")
}

/// Language models used for assembly; absent models yield zero columns.
#[derive(Debug, Clone, Copy)]
pub struct Scorers<'a> {
    pub trigram: Option<&'a TrigramLm>,
    pub lstm: Option<&'a LstmLm>,
    pub cache_weight: f64,
    pub adaptation: AdaptationConfig,
}

impl Default for Scorers<'_> {
    fn default() -> Self {
        Self { trigram: None, lstm: None, cache_weight: DEFAULT_CACHE_WEIGHT, adaptation: AdaptationConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub doc_id: String,
    pub sentence_id: String,
    /// 0 for the reference.
    pub variant_id: usize,
    pub features: FeatureVector,
}

/// One row for the reference and each variant. Every row of the set sees the
/// same context: one cache state and one adaptation step.
pub fn assemble_features(
    set: &VariantSet,
    scorers: &Scorers<'_>,
    external: Option<&ExternalColumn>,
    is_cfg: &IsConfig,
) -> Result<Vec<FeatureRow>, FeatureError> {
    let mut trees = vec![(0usize, set.reference.clone())];
    trees.extend(set.variants.iter().map(|v| (v.id, set.variant_tree(v))));
    let forms: Vec<Vec<String>> =
        trees.iter().map(|(_, t)| t.forms().into_iter().map(str::to_string).collect()).collect();
    let context_forms: Vec<String> =
        set.context.as_ref().map(|c| c.forms().into_iter().map(str::to_string).collect()).unwrap_or_default();
    let context = set.context.as_ref();

    let cache = scorers.trigram.map(|lm| {
        let mut c = CacheState::new(scorers.cache_weight);
        c.update(lm.vocab(), &context_forms);
        c
    });
    let adaptive = scorers.lstm.map(|lm| adapt_and_score(lm, &context_forms, &forms, &scorers.adaptation));

    let mut rows = Vec::with_capacity(trees.len());
    for (k, (vid, tree)) in trees.iter().enumerate() {
        let words = &forms[k];
        let pcfg_surp = match external {
            None => 0.0,
            Some(col) => {
                let key = row_key(set.sentence_id(), *vid);
                col.get(&key).ok_or(FeatureError::MissingExternal(key))?
            }
        };
        let features = FeatureVector {
            trigram_surp: scorers.trigram.map(|lm| lm.sentence_surprisal(words).total).unwrap_or(0.0),
            dep_length: dependency_length(tree),
            pcfg_surp,
            is_score: is_score(tree, context, is_cfg),
            lstm_surp: scorers.lstm.map(|lm| lstm_sentence_surprisal(lm, words).total).unwrap_or(0.0),
            adaptive_lstm_surp: adaptive.as_ref().map(|a| a[k].total).unwrap_or(0.0),
            lex_rept_surp: match (scorers.trigram, &cache) {
                (Some(lm), Some(c)) => lm.cache_sentence_surprisal(c, words).total,
                _ => 0.0,
            },
        };
        rows.push(FeatureRow {
            doc_id: set.doc_id().to_string(),
            sentence_id: set.sentence_id().to_string(),
            variant_id: *vid,
            features,
        });
    }
    Ok(rows)
}

fn header() -> String {
    format!("doc_id\tsent_id\tvariant_id\t{}", FEATURE_NAMES.join("\t"))
}

/// Tab-separated feature table preceded by a version line.
pub fn write_feature_table(rows: &[FeatureRow]) -> String {
    let mut out = format!("#orderlab-features\t{FEATURE_TABLE_VERSION}\n{}\n", header());
    for r in rows {
        let f = &r.features;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:?}\t{}\t{:?}\t{}\t{:?}\t{:?}\t{:?}",
            r.doc_id,
            r.sentence_id,
            r.variant_id,
            f.trigram_surp,
            f.dep_length,
            f.pcfg_surp,
            f.is_score,
            f.lstm_surp,
            f.adaptive_lstm_surp,
            f.lex_rept_surp
        );
    }
    out
}

pub fn read_feature_table(text: &str) -> Result<Vec<FeatureRow>, FeatureError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let bad = |row: usize, m: &str| FeatureError::Parse { row, message: m.to_string() };
    match lines.next() {
        Some((_, l)) if l == format!("#orderlab-features\t{FEATURE_TABLE_VERSION}") => {}
        _ => return Err(bad(1, "missing or unsupported version line")),
    }
    match lines.next() {
        Some((_, l)) if l == header() => {}
        _ => return Err(bad(2, "unexpected header")),
    }
    let mut rows = Vec::new();
    for (row, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(bad(row, "expected 10 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(row, &format!("bad number {s:?}")));
        let is_score: i8 = f[6].parse().map_err(|_| bad(row, "bad is_score"))?;
        if !(-1..=1).contains(&is_score) {
            return Err(bad(row, "is_score outside -1..1"));
        }
        rows.push(FeatureRow {
            doc_id: f[0].to_string(),
            sentence_id: f[1].to_string(),
            variant_id: f[2].parse().map_err(|_| bad(row, "bad variant id"))?,
            features: FeatureVector {
                trigram_surp: num(f[3])?,
                dep_length: f[4].parse().map_err(|_| bad(row, "bad dep_length"))?,
                pcfg_surp: num(f[5])?,
                is_score,
                lstm_surp: num(f[7])?,
                adaptive_lstm_surp: num(f[8])?,
                lex_rept_surp: num(f[9])?,
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn tree(spec: &[(&str, &str, &str, usize, &str)]) -> DependencyTree {
        let tokens = spec
            .iter()
            .enumerate()
            .map(|(i, (form, lemma, upos, head, rel))| Token::new(i + 1, form, lemma, upos, *head, rel))
            .collect();
        DependencyTree::new("d", "s", tokens).unwrap()
    }

    fn heads(hs: &[usize]) -> DependencyTree {
        let spec: Vec<_> = hs.iter().map(|&h| ("w", "w", "NOUN", h, "dep")).collect();
        tree(&spec)
    }

    #[test]
    fn adjacent_chain_has_zero_length() {
        assert_eq!(dependency_length(&heads(&[0, 1, 2, 3])), 0);
    }

    #[test]
    fn five_token_example() {
        // arcs 2→1, 2→4, 4→3, 2→5
        assert_eq!(dependency_length(&heads(&[2, 0, 4, 2, 2])), 3);
    }

    #[test]
    fn long_before_short_changes_total() {
        // [a b] [c] V with a->b: long constituent first
        let long_first = heads(&[2, 4, 4, 0]);
        let short_first = heads(&[4, 3, 4, 0]);
        assert_eq!(dependency_length(&long_first), 1);
        assert_eq!(dependency_length(&short_first), 2);
    }

    fn context() -> DependencyTree {
        tree(&[
            ("amar", "amar", "PROPN", 2, "pof"),
            ("ujala-ki", "ujala", "PROPN", 3, "r6"),
            ("bhumika", "bhumika", "NOUN", 5, "k1"),
            ("nispaksh", "nispaksh", "ADJ", 5, "k1s"),
            ("rehti", "rah", "VERB", 0, "root"),
            ("hai", "hai", "AUX", 5, "lwg_vaux"),
        ])
    }

    #[test]
    fn given_given_reference_scores_zero() {
        let reference = tree(&[
            ("amar", "amar", "PROPN", 2, "pof"),
            ("ujala-ko", "ujala", "PROPN", 6, "k4"),
            ("yah", "yah", "PRON", 6, "k1"),
            ("sukravar-ko", "sukravar", "NOUN", 6, "k7t"),
            ("daak-se", "daak", "NOUN", 6, "k3"),
            ("prapt", "prapt", "VERB", 0, "root"),
            ("hua", "ho", "AUX", 6, "lwg_vaux"),
        ]);
        let tags = givenness_tags(&reference, Some(&context()), &IsConfig::default());
        assert_eq!(tags, vec![Givenness::Given, Givenness::Given]);
        assert_eq!(is_score(&reference, Some(&context()), &IsConfig::default()), 0);
    }

    #[test]
    fn new_given_variant_scores_minus_one() {
        let variant = tree(&[
            ("sukravar-ko", "sukravar", "NOUN", 6, "k2"),
            ("yah", "yah", "PRON", 6, "k1"),
            ("amar", "amar", "PROPN", 4, "pof"),
            ("ujala-ko", "ujala", "PROPN", 6, "k4"),
            ("daak-se", "daak", "NOUN", 6, "k3"),
            ("prapt", "prapt", "VERB", 0, "root"),
            ("hua", "ho", "AUX", 6, "lwg_vaux"),
        ]);
        assert_eq!(is_score(&variant, Some(&context()), &IsConfig::default()), -1);
    }

    #[test]
    fn no_context_no_pronoun_is_zero() {
        let t = tree(&[
            ("raam", "raam", "PROPN", 3, "k1"),
            ("kitaab", "kitaab", "NOUN", 3, "k2"),
            ("padh", "padh", "VERB", 0, "root"),
        ]);
        assert_eq!(givenness_tags(&t, None, &IsConfig::default()), vec![Givenness::New, Givenness::New]);
        assert_eq!(is_score(&t, None, &IsConfig::default()), 0);
    }

    #[test]
    fn sign_sum_cases() {
        use Givenness::*;
        assert_eq!(sign_sum(&[Given, New]), 1);
        assert_eq!(sign_sum(&[New, Given]), -1);
        assert_eq!(sign_sum(&[Given, New, Given]), 0);
        assert_eq!(sign_sum(&[Given, Given, New]), 1);
        assert_eq!(sign_sum(&[]), 0);
    }

    #[test]
    fn external_column_parsing() {
        let col = ExternalColumn::read("s1:0\t107.04\ns1:1\t105.11\ns2:0\t3\n".as_bytes()).unwrap();
        assert_eq!(col.len(), 3);
        assert_eq!(col.get("s1:0"), Some(107.04));
        assert_eq!(col.get("s1:1"), Some(105.11));
        match ExternalColumn::read("a\t1\nb\tx\n".as_bytes()) {
            Err(FeatureError::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExternalColumn::read("a\t1\na\t2\n".as_bytes()),
            Err(FeatureError::DuplicateId { row: 2, .. })
        ));
        assert_eq!(col.coverage(["s1:0", "zz"]), 0.5);
    }

    #[test]
    fn table_round_trip() {
        let rows = vec![FeatureRow {
            doc_id: "d".into(),
            sentence_id: "s".into(),
            variant_id: 3,
            features: FeatureVector {
                trigram_surp: 34.27,
                dep_length: 24,
                pcfg_surp: 107.04,
                is_score: 0,
                lstm_surp: 173.06,
                adaptive_lstm_surp: 156.88,
                lex_rept_surp: 36.45,
            },
        }];
        let text = write_feature_table(&rows);
        assert_eq!(read_feature_table(&text).unwrap(), rows);
        assert_eq!(rows[0].features.to_array(), [34.27, 24.0, 107.04, 0.0, 173.06, 156.88, 36.45]);
    }
}
