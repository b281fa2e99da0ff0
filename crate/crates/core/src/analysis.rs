//! Subset construction (verb class, argument frame, conjunct verbs), case
//! density, per-subset accuracy comparison and predictor correlations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::DependencyTree;
use crate::ranker::{discordant, mcnemar_from_counts, PairInstance, PredictionTable};
use crate::stats::pearson;
use crate::variantgen::preverbal_constituents;

pub const DEFAULT_CLASS: &str = "OTHERS";
const BUNDLED_CLASSES: &str = include_str!("../data/levin_classes.tsv");

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("verb class map line {0}: expected lemma<TAB>class")]
    BadMapLine(usize),
    #[error("prediction tables are not aligned with the pairs")]
    Misaligned,
}

/// Root-verb lemma to class label; unmapped lemmas get [`DEFAULT_CLASS`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbClassMap {
    map: HashMap<String, String>,
}

impl Default for VerbClassMap {
    fn default() -> Self {
        Self::parse(BUNDLED_CLASSES).expect("bundled verb class map is well formed")
    }
}

impl VerbClassMap {
    /// `lemma<TAB>class` lines; blank and `#` lines are skipped.
    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lemma, class) = line.split_once('\t').ok_or(AnalysisError::BadMapLine(i + 1))?;
            if lemma.is_empty() || class.trim().is_empty() {
                return Err(AnalysisError::BadMapLine(i + 1));
            }
            map.insert(lemma.to_lowercase(), class.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn class_of(&self, lemma: &str) -> &str {
        self.map.get(&lemma.to_lowercase()).map(String::as_str).unwrap_or(DEFAULT_CLASS)
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        self.map.values().map(String::as_str).chain(std::iter::once(DEFAULT_CLASS)).collect()
    }
}

pub fn classify_verb<'m>(tree: &DependencyTree, map: &'m VerbClassMap) -> &'m str {
    map.class_of(tree.root().lemma_or_form())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArgumentFrame {
    SDo,
    SIo,
    SIoDo,
    None,
}

impl ArgumentFrame {
    pub fn as_str(self) -> &'static str {
        match self {
            ArgumentFrame::SDo => "S-DO",
            ArgumentFrame::SIo => "S-IO",
            ArgumentFrame::SIoDo => "S-IO-DO",
            ArgumentFrame::None => "NONE",
        }
    }
}

/// Frame from the root's dependents: subject `k1`, direct object `k2`,
/// indirect object `k4`.
pub fn argument_frame(tree: &DependencyTree) -> ArgumentFrame {
    let rels: BTreeSet<&str> = tree.children(tree.root_index()).map(|t| t.deprel.as_str()).collect();
    match (rels.contains("k1"), rels.contains("k2"), rels.contains("k4")) {
        (true, true, true) => ArgumentFrame::SIoDo,
        (true, true, false) => ArgumentFrame::SDo,
        (true, false, true) => ArgumentFrame::SIo,
        _ => ArgumentFrame::None,
    }
}

/// A `pof` dependent of the root marks a conjunct verb.
pub fn is_conjunct_verb(tree: &DependencyTree) -> bool {
    tree.children(tree.root_index()).any(|t| t.deprel == "pof")
}

/// Looser variant: a `pof` arc anywhere in the tree.
pub fn has_pof_anywhere(tree: &DependencyTree) -> bool {
    tree.tokens().iter().any(|t| t.deprel == "pof")
}

/// `lwg_psp` tokens inside preverbal constituents per constituent; `None`
/// without constituents.
pub fn case_density(tree: &DependencyTree) -> Option<f64> {
    let cons = preverbal_constituents(tree);
    if cons.is_empty() {
        return None;
    }
    let markers = cons.iter().flat_map(|c| c.positions()).filter(|&i| tree.token(i).deprel == "lwg_psp").count();
    Some(markers as f64 / cons.len() as f64)
}

/// Tags attached to every pair of a reference: `class:`, `frame:` and
/// `conjunct:` families.
pub fn subset_tags(tree: &DependencyTree, map: &VerbClassMap) -> BTreeSet<String> {
    let mut tags = BTreeSet::new();
    tags.insert(format!("class:{}", classify_verb(tree, map)));
    tags.insert(format!("frame:{}", argument_frame(tree).as_str()));
    tags.insert(format!("conjunct:{}", if is_conjunct_verb(tree) { "yes" } else { "no" }));
    tags
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRow {
    pub label: String,
    pub pairs: usize,
    pub sentences: usize,
    pub freq_pairs: f64,
    pub freq_sentences: f64,
    pub baseline_accuracy: f64,
    pub augmented_accuracy: f64,
    /// Absent for empty subsets.
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetReport {
    pub family: String,
    pub rows: Vec<SubsetRow>,
}

/// One row per tag value of `family` (e.g. `class`), plus a `Full` row.
/// Accuracies are percentages; McNemar runs on the subset's pairs only and
/// `p < 0.05` marks a row significant.
pub fn subset_report(
    baseline: &PredictionTable,
    augmented: &PredictionTable,
    pairs: &[PairInstance],
    family: &str,
    labels: &[&str],
) -> Result<SubsetReport, AnalysisError> {
    if baseline.gold.len() != pairs.len() || augmented.gold.len() != pairs.len() {
        return Err(AnalysisError::Misaligned);
    }
    let prefix = format!("{family}:");
    let mut members: BTreeMap<String, Vec<usize>> = labels.iter().map(|l| (l.to_string(), Vec::new())).collect();
    for (i, p) in pairs.iter().enumerate() {
        for t in &p.subset_tags {
            if let Some(label) = t.strip_prefix(&prefix) {
                members.entry(label.to_string()).or_default().push(i);
            }
        }
    }
    let total_pairs = pairs.len();
    let total_sentences = pairs.iter().map(|p| p.group_id.as_str()).collect::<BTreeSet<_>>().len();
    let row = |label: String, idx: &[usize]| {
        let sentences = idx.iter().map(|&i| pairs[i].group_id.as_str()).collect::<BTreeSet<_>>().len();
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let correct = |t: &PredictionTable| idx.iter().filter(|&&i| t.predicted[i] == t.gold[i]).count();
        let p_value = if idx.is_empty() {
            None
        } else {
            let pick = |v: &[u8]| idx.iter().map(|&i| v[i]).collect::<Vec<u8>>();
            let (b, c) = discordant(&pick(&augmented.predicted), &pick(&baseline.predicted), &pick(&baseline.gold))
                .expect("aligned by construction");
            Some(mcnemar_from_counts(b, c))
        };
        SubsetRow {
            label,
            pairs: idx.len(),
            sentences,
            freq_pairs: pct(idx.len(), total_pairs),
            freq_sentences: pct(sentences, total_sentences),
            baseline_accuracy: pct(correct(baseline), idx.len()),
            augmented_accuracy: pct(correct(augmented), idx.len()),
            significant: p_value.is_some_and(|p| p < 0.05),
            p_value,
        }
    };
    let mut rows: Vec<SubsetRow> = members.iter().map(|(l, idx)| row(l.clone(), idx)).collect();
    let all: Vec<usize> = (0..pairs.len()).collect();
    rows.push(row("Full".to_string(), &all));
    Ok(SubsetReport { family: family.to_string(), rows })
}

impl SubsetReport {
    /// Aligned text table; `*` marks significant rows.
    pub fn render(&self) -> String {
        let w = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(6).max(6);
        let mut out = format!(
            "{:<w$}  {:>7}  {:>9}  {:>7}  {:>9}  {:>8}  {:>9}  {:>8}\n",
            self.family, "pairs", "freq(%)", "sents", "sfreq(%)", "base(%)", "augm(%)", "p"
        );
        for r in &self.rows {
            let p = r.p_value.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
            let mark = if r.significant { "*" } else { "" };
            let _ = writeln!(
                out,
                "{:<w$}  {:>7}  {:>9.2}  {:>7}  {:>9.2}  {:>8.2}  {:>9}  {:>8}",
                r.label,
                r.pairs,
                r.freq_pairs,
                r.sentences,
                r.freq_sentences,
                r.baseline_accuracy,
                format!("{:.2}{mark}", r.augmented_accuracy),
                p
            );
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "subset\tpairs\tfreq_pairs\tsentences\tfreq_sentences\tbaseline_accuracy\taugmented_accuracy\tp_value\tsignificant\n",
        );
        for r in &self.rows {
            let p = r.p_value.map(|p| format!("{p:?}")).unwrap_or_else(|| "NA".into());
            let _ = writeln!(
                out,
                "{}\t{}\t{:?}\t{}\t{:?}\t{:?}\t{:?}\t{p}\t{}",
                r.label,
                r.pairs,
                r.freq_pairs,
                r.sentences,
                r.freq_sentences,
                r.baseline_accuracy,
                r.augmented_accuracy,
                r.significant
            );
        }
        out
    }
}

/// Pairwise Pearson correlations of named columns; `None` where undefined.
pub fn correlation_matrix(columns: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    columns.iter().map(|a| columns.iter().map(|b| pearson(a, b)).collect()).collect()
}

/// Square tab-separated matrix with a header row and column.
pub fn correlation_tsv(names: &[&str], matrix: &[Vec<Option<f64>>]) -> String {
    let mut out = format!("\t{}\n", names.join("\t"));
    for (name, row) in names.iter().zip(matrix) {
        let cells: Vec<String> =
            row.iter().map(|c| c.map(|r| format!("{r:.6}")).unwrap_or_else(|| "NA".into())).collect();
        let _ = writeln!(out, "{name}\t{}", cells.join("\t"));
    }
    out
}

/// Mean case density and count per label.
pub fn case_density_by<'a>(
    items: impl IntoIterator<Item = (&'a str, &'a DependencyTree)>,
) -> BTreeMap<String, (f64, usize)> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (label, tree) in items {
        if let Some(d) = case_density(tree) {
            let e = acc.entry(label.to_string()).or_default();
            e.0 += d;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, (s / n as f64, n))).collect()
}
