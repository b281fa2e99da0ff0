//! Meaning-equivalent word-order variants.
//!
//! A variant reorders the preverbal dependents of the root verb as whole
//! blocks: every dependent keeps its full (contiguous) subtree, and the root
//! and everything after it stay in place. Orderings that produce an adjacent
//! pair of dependent relations never seen in the reference corpus are dropped.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::corpus::{DependencyTree, Document};
use crate::rng::SplitMix64;

pub const DEFAULT_CAP: usize = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VariantError {
    #[error("cannot build a relation grammar from an empty corpus")]
    EmptyCorpus,
    #[error("cap must be at least 2, got {0}")]
    CapTooSmall(usize),
    #[error("constituent order is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("variant record {0:?} does not match its treebank sentence")]
    RecordMismatch(String),
    #[error("malformed variant record on line {0}")]
    MalformedRecord(usize),
}

/// A root dependent together with its projective subtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constituent {
    pub head: usize,
    /// Inclusive 1-based token range.
    pub span: (usize, usize),
    pub deprel: String,
}

impl Constituent {
    pub fn positions(&self) -> std::ops::RangeInclusive<usize> {
        self.span.0..=self.span.1
    }

    pub fn len(&self) -> usize {
        self.span.1 - self.span.0 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Root dependents lying entirely left of the root, in linear order.
pub fn preverbal_constituents(tree: &DependencyTree) -> Vec<Constituent> {
    let root = tree.root_index();
    tree.children(root)
        .filter_map(|t| {
            let span = tree.subtree_span(t.index);
            (span.1 < root).then(|| Constituent { head: t.index, span, deprel: t.deprel.clone() })
        })
        .collect()
}

/// Ordered pairs of relation labels seen between adjacent preverbal
/// constituents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttestedGrammar {
    bigrams: Option<BTreeSet<(String, String)>>,
}

impl AttestedGrammar {
    /// Accepts every ordering.
    pub fn permissive() -> Self {
        Self { bigrams: None }
    }

    pub fn from_bigrams<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        Self { bigrams: Some(pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect()) }
    }

    pub fn bigrams(&self) -> Option<&BTreeSet<(String, String)>> {
        self.bigrams.as_ref()
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        match &self.bigrams {
            None => true,
            Some(set) => set.contains(&(a.to_string(), b.to_string())),
        }
    }

    /// True when every adjacent pair in `labels` is attested.
    pub fn allows<S: AsRef<str>>(&self, labels: &[S]) -> bool {
        labels.windows(2).all(|w| self.contains(w[0].as_ref(), w[1].as_ref()))
    }

    pub fn add_tree(&mut self, tree: &DependencyTree) {
        let labels: Vec<String> = preverbal_constituents(tree).into_iter().map(|c| c.deprel).collect();
        let set = self.bigrams.get_or_insert_with(BTreeSet::new);
        for w in labels.windows(2) {
            set.insert((w[0].clone(), w[1].clone()));
        }
    }
}

pub fn build_attested_grammar(corpus: &[Document]) -> Result<AttestedGrammar, VariantError> {
    let mut trees = corpus.iter().flat_map(|d| d.sentences.iter()).peekable();
    if trees.peek().is_none() {
        return Err(VariantError::EmptyCorpus);
    }
    let mut g = AttestedGrammar { bigrams: Some(BTreeSet::new()) };
    for t in trees {
        g.add_tree(t);
    }
    Ok(g)
}

/// Token positions of `tree` when its preverbal constituents are placed in
/// `order` (indices into [`preverbal_constituents`]).
pub fn linearize(tree: &DependencyTree, order: &[usize]) -> Result<Vec<usize>, VariantError> {
    let constituents = preverbal_constituents(tree);
    linearize_with(tree, &constituents, order)
}

fn linearize_with(
    tree: &DependencyTree,
    constituents: &[Constituent],
    order: &[usize],
) -> Result<Vec<usize>, VariantError> {
    let n = constituents.len();
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(VariantError::NotAPermutation(n));
    }
    for &i in order {
        if i >= n || seen[i] {
            return Err(VariantError::NotAPermutation(n));
        }
        seen[i] = true;
    }
    let mut out = Vec::with_capacity(tree.len());
    for &i in order {
        out.extend(constituents[i].positions());
    }
    let suffix_start = constituents.last().map(|c| c.span.1 + 1).unwrap_or(1);
    out.extend(suffix_start..=tree.len());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    /// 1-based; 0 denotes the reference in record files.
    pub id: usize,
    /// Constituent order, as indices into the reference's constituents.
    pub order: Vec<usize>,
    /// Token positions of the reference in variant order.
    pub tokens: Vec<usize>,
}

impl Variant {
    pub fn signature(&self) -> String {
        signature(&self.order)
    }
}

pub fn signature(order: &[usize]) -> String {
    if order.is_empty() {
        return "-".to_string();
    }
    order.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join("-")
}

fn parse_signature(s: &str) -> Option<Vec<usize>> {
    if s == "-" {
        return Some(Vec::new());
    }
    s.split('-').map(|p| p.parse::<usize>().ok().and_then(|v| v.checked_sub(1))).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSet {
    pub reference: DependencyTree,
    pub context: Option<DependencyTree>,
    pub variants: Vec<Variant>,
    pub seed: u64,
    /// Orderings that passed the filter but repeated an earlier surface string
    /// (including the reference's own).
    pub duplicates_dropped: usize,
    pub filtered_out: usize,
}

impl VariantSet {
    pub fn doc_id(&self) -> &str {
        &self.reference.doc_id
    }

    pub fn sentence_id(&self) -> &str {
        &self.reference.sentence_id
    }

    pub fn variant_forms(&self, v: &Variant) -> Vec<&str> {
        v.tokens.iter().map(|&p| self.reference.token(p).form.as_str()).collect()
    }

    /// Reordered tree for a variant, with heads renumbered.
    pub fn variant_tree(&self, v: &Variant) -> DependencyTree {
        self.reference
            .reordered(&v.tokens, self.reference.sentence_id.clone())
            .expect("variant tokens are a permutation of a projective tree")
    }

    /// Record lines: reference (id 0) followed by every variant.
    pub fn to_records(&self) -> String {
        let n = preverbal_constituents(&self.reference).len();
        let identity: Vec<usize> = (0..n).collect();
        let mut out = format!(
            "{}\t{}\t0\t{}\t{}\n",
            self.doc_id(),
            self.sentence_id(),
            self.reference.forms().join(" "),
            signature(&identity)
        );
        for v in &self.variants {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                self.doc_id(),
                self.sentence_id(),
                v.id,
                self.variant_forms(v).join(" "),
                v.signature()
            ));
        }
        out
    }
}

/// Generates every block permutation of the preverbal constituents, drops the
/// reference ordering, orderings with unattested relation bigrams and repeated
/// surface strings, then keeps at most `cap - 1` of the survivors chosen
/// uniformly with a stream keyed by `(seed, doc_id/sentence_id)`.
pub fn generate_variants(
    tree: &DependencyTree,
    context: Option<&DependencyTree>,
    grammar: &AttestedGrammar,
    cap: usize,
    seed: u64,
) -> Result<VariantSet, VariantError> {
    if cap < 2 {
        return Err(VariantError::CapTooSmall(cap));
    }
    let mut set = VariantSet {
        reference: tree.clone(),
        context: context.cloned(),
        variants: Vec::new(),
        seed,
        duplicates_dropped: 0,
        filtered_out: 0,
    };
    let constituents = preverbal_constituents(tree);
    let n = constituents.len();
    if n < 2 {
        return Ok(set);
    }

    let forms = tree.forms();
    let surface =
        |positions: &[usize]| -> String { positions.iter().map(|&p| forms[p - 1]).collect::<Vec<_>>().join(" ") };
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(forms.join(" "));

    let mut survivors: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    while next_permutation(&mut order) {
        let labels: Vec<&str> = order.iter().map(|&i| constituents[i].deprel.as_str()).collect();
        if !grammar.allows(&labels) {
            set.filtered_out += 1;
            continue;
        }
        let tokens = linearize_with(tree, &constituents, &order)?;
        if !seen.insert(surface(&tokens)) {
            set.duplicates_dropped += 1;
            continue;
        }
        survivors.push((order.clone(), tokens));
    }

    let keep = cap - 1;
    let chosen: Vec<usize> = if survivors.len() > keep {
        let key = format!("{}/{}", tree.doc_id, tree.sentence_id);
        SplitMix64::for_item(seed, &key).sample_indices(survivors.len(), keep)
    } else {
        (0..survivors.len()).collect()
    };
    let mut survivors: Vec<Option<(Vec<usize>, Vec<usize>)>> = survivors.into_iter().map(Some).collect();
    set.variants = chosen
        .into_iter()
        .enumerate()
        .map(|(i, idx)| {
            let (order, tokens) = survivors[idx].take().expect("indices are distinct");
            Variant { id: i + 1, order, tokens }
        })
        .collect();
    Ok(set)
}

/// Lexicographic successor; returns false after the last permutation.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// One parsed line of a variant record file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantRecord {
    pub doc_id: String,
    pub sentence_id: String,
    pub variant_id: usize,
    pub text: String,
    pub order: Vec<usize>,
}

pub fn parse_variant_records(text: &str) -> Result<Vec<VariantRecord>, VariantError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(VariantError::MalformedRecord(i + 1));
            }
            Ok(VariantRecord {
                doc_id: f[0].to_string(),
                sentence_id: f[1].to_string(),
                variant_id: f[2].parse().map_err(|_| VariantError::MalformedRecord(i + 1))?,
                text: f[3].to_string(),
                order: parse_signature(f[4]).ok_or(VariantError::MalformedRecord(i + 1))?,
            })
        })
        .collect()
}

/// Rebuilds a variant set for `tree` from its records (reference line optional).
pub fn set_from_records(
    tree: &DependencyTree,
    context: Option<&DependencyTree>,
    records: &[&VariantRecord],
    seed: u64,
) -> Result<VariantSet, VariantError> {
    let constituents = preverbal_constituents(tree);
    let mut variants = Vec::new();
    for r in records.iter().filter(|r| r.variant_id > 0) {
        let tokens = linearize_with(tree, &constituents, &r.order)
            .map_err(|_| VariantError::RecordMismatch(format!("{}:{}", r.sentence_id, r.variant_id)))?;
        let text: Vec<&str> = tokens.iter().map(|&p| tree.token(p).form.as_str()).collect();
        if text.join(" ") != r.text {
            return Err(VariantError::RecordMismatch(format!("{}:{}", r.sentence_id, r.variant_id)));
        }
        variants.push(Variant { id: r.variant_id, order: r.order.clone(), tokens });
    }
    Ok(VariantSet {
        reference: tree.clone(),
        context: context.cloned(),
        variants,
        seed,
        duplicates_dropped: 0,
        filtered_out: 0,
    })
}
