//! Pairwise ranking transform, logistic regression by IRLS, grouped
//! cross-validation and classifier comparison tests.

// Matrix and table code reads best with explicit indices.
#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::features::{FeatureRow, FeatureVector, FEATURE_NAMES};
use crate::rng::SplitMix64;
use crate::stats::{binomial_half_cdf, chi2_sf};

pub const N_FEATURES: usize = 7;
pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("no pairs to fit")]
    NoPairs,
    #[error("information matrix is singular; collinear columns: {}", .0.join(", "))]
    Collinear(Vec<String>),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("{groups} groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("k must be at least 2")]
    BadFolds,
    #[error("reduced model is not nested in the full model")]
    NotNested,
    #[error("prediction vectors differ in length")]
    LengthMismatch,
    #[error("set {0} has no reference row")]
    MissingReference(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairInstance {
    /// Features of the first sentence minus those of the second.
    pub delta: [f64; N_FEATURES],
    /// 1 when the first sentence is the reference.
    pub label: u8,
    pub group_id: String,
    pub subset_tags: BTreeSet<String>,
}

impl PairInstance {
    /// Same comparison in the opposite orientation.
    pub fn flipped(&self) -> Self {
        let mut delta = self.delta;
        delta.iter_mut().for_each(|d| *d = -*d);
        Self { delta, label: 1 - self.label, group_id: self.group_id.clone(), subset_tags: self.subset_tags.clone() }
    }
}

/// A reference with its variants' feature vectors, in variant-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub group_id: String,
    pub reference: FeatureVector,
    pub variants: Vec<FeatureVector>,
    pub tags: BTreeSet<String>,
}

/// Groups feature rows by `(doc_id, sentence_id)`; the group id is
/// `doc_id/sentence_id`.
pub fn sets_from_rows(rows: &[FeatureRow]) -> Result<Vec<ScoredSet>, RankError> {
    let mut groups: BTreeMap<(String, String), Vec<&FeatureRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.doc_id.clone(), r.sentence_id.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((doc, sid), mut rs)| {
            rs.sort_by_key(|r| r.variant_id);
            let group_id = format!("{doc}/{sid}");
            if rs.first().map(|r| r.variant_id) != Some(0) {
                return Err(RankError::MissingReference(group_id));
            }
            Ok(ScoredSet {
                group_id,
                reference: rs[0].features,
                variants: rs[1..].iter().map(|r| r.features).collect(),
                tags: BTreeSet::new(),
            })
        })
        .collect()
}

/// Even variant index (0-based): `(reference, variant)` labelled 1; odd:
/// `(variant, reference)` labelled 0.
pub fn make_pairs(sets: &[ScoredSet]) -> Vec<PairInstance> {
    let mut out = Vec::new();
    for set in sets {
        let r = set.reference.to_array();
        for (i, v) in set.variants.iter().enumerate() {
            let v = v.to_array();
            let (first, second, label) = if i % 2 == 0 { (r, v, 1) } else { (v, r, 0) };
            let mut delta = [0.0; N_FEATURES];
            for k in 0..N_FEATURES {
                delta[k] = first[k] - second[k];
            }
            out.push(PairInstance { delta, label, group_id: set.group_id.clone(), subset_tags: set.tags.clone() });
        }
    }
    out
}

/// Selected feature columns, kept in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureSubset {
    pub columns: Vec<usize>,
}

impl FeatureSubset {
    pub fn all() -> Self {
        Self { columns: (0..N_FEATURES).collect() }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, RankError> {
        let mut columns = names
            .iter()
            .map(|n| {
                FeatureVector::index_of(n.as_ref()).ok_or_else(|| RankError::UnknownFeature(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        columns.sort_unstable();
        columns.dedup();
        Ok(Self { columns })
    }

    /// Names separated by `,` or `+`; `all` selects every column.
    pub fn parse(spec: &str) -> Result<Self, RankError> {
        if spec.trim() == "all" {
            return Ok(Self::all());
        }
        let names: Vec<&str> = spec.split([',', '+']).map(str::trim).filter(|s| !s.is_empty()).collect();
        Self::from_names(&names)
    }

    pub fn without(&self, name: &str) -> Result<Self, RankError> {
        let i = FeatureVector::index_of(name).ok_or_else(|| RankError::UnknownFeature(name.to_string()))?;
        Ok(Self { columns: self.columns.iter().copied().filter(|&c| c != i).collect() })
    }

    pub fn with(&self, name: &str) -> Result<Self, RankError> {
        let i = FeatureVector::index_of(name).ok_or_else(|| RankError::UnknownFeature(name.to_string()))?;
        let mut columns = self.columns.clone();
        columns.push(i);
        columns.sort_unstable();
        columns.dedup();
        Ok(Self { columns })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.columns.iter().map(|&c| FEATURE_NAMES[c]).collect()
    }

    pub fn label(&self) -> String {
        self.names().join("+")
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.columns.iter().all(|c| other.columns.contains(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iter: usize,
    pub score_tol: f64,
    /// Centre and scale each selected column before fitting.
    pub standardize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_iter: 100, score_tol: 1e-8, standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub beta: f64,
    pub se: f64,
    pub t: f64,
}

impl Coefficient {
    pub fn new(name: impl Into<String>, beta: f64, se: f64) -> Self {
        Self { name: name.into(), beta, se, t: beta / se }
    }

    pub fn significant(&self) -> bool {
        self.t.abs() > 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    pub subset: FeatureSubset,
    /// Intercept first, then the subset's columns.
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every training pair is fitted with certainty; coefficients diverge.
    pub separated: bool,
    /// Largest absolute component of the log-likelihood gradient at the
    /// returned coefficients.
    pub max_score: f64,
    /// Columns that are identically zero; their coefficient is fixed at 0.
    pub uninformative: Vec<String>,
    pub standardized: bool,
    /// Column means and scales applied when standardising.
    scaling: Vec<(f64, f64)>,
}

impl RegressionReport {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Probability that the first sentence of the pair is the reference.
    pub fn predict_proba(&self, delta: &[f64; N_FEATURES]) -> f64 {
        let mut eta = self.coefficients[0].beta;
        for (j, &col) in self.subset.columns.iter().enumerate() {
            let (m, s) = self.scaling[j];
            eta += self.coefficients[j + 1].beta * (delta[col] - m) / s;
        }
        sigmoid(eta)
    }

    /// Aligned text table: predictor, estimate, standard error, t; `*` marks
    /// `|t| > 2`.
    pub fn render(&self) -> String {
        let width = self.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(9).max(9);
        let mut out = format!("{:<width$}  {:>9}  {:>9}  {:>9}\n", "Predictor", "beta", "sigma", "t");
        for c in &self.coefficients {
            let mark = if c.significant() { "*" } else { "" };
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>9}  {:>9}",
                c.name,
                format!("{:.2}{mark}", c.beta),
                format!("{:.3}", c.se),
                format!("{:.2}", c.t)
            );
        }
        let _ = writeln!(out, "n = {}, log-likelihood = {:.4}", self.n, self.log_likelihood);
        if self.separated {
            out.push_str("warning: perfect separation; estimates diverge\n");
        }
        for u in &self.uninformative {
            let _ = writeln!(out, "warning: column {u} is constant zero");
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("predictor\tbeta\tsigma\tt\n");
        for c in &self.coefficients {
            let _ = writeln!(out, "{}\t{:?}\t{:?}\t{:?}", c.name, c.beta, c.se, c.t);
        }
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Cholesky factor of a symmetric matrix, or the index of the first pivot
/// that is not clearly positive.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, usize> {
    let n = a.len();
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d <= 1e-10 * scale {
            return Err(j);
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / d;
        }
    }
    Ok(l)
}

fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Columns participating in the dependency detected at pivot `k`: `k` plus
/// every earlier column with a non-negligible coefficient in the regression of
/// column `k` on the earlier ones.
fn collinear_set(h: &[Vec<f64>], k: usize) -> Vec<usize> {
    if k == 0 {
        return vec![0];
    }
    let sub: Vec<Vec<f64>> = (0..k).map(|i| h[i][..k].to_vec()).collect();
    let rhs: Vec<f64> = (0..k).map(|i| h[i][k]).collect();
    let mut set: Vec<usize> = match cholesky(&sub) {
        Ok(l) => {
            let c = chol_solve(&l, &rhs);
            (0..k).filter(|&i| c[i].abs() > 1e-8).collect()
        }
        Err(_) => (0..k).collect(),
    };
    set.push(k);
    set
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares, with an intercept and the subset's delta columns.
pub fn fit_logistic(
    pairs: &[PairInstance],
    subset: &FeatureSubset,
    cfg: &FitConfig,
) -> Result<RegressionReport, RankError> {
    if pairs.is_empty() {
        return Err(RankError::NoPairs);
    }
    let n = pairs.len();
    let names: Vec<String> =
        std::iter::once(INTERCEPT.to_string()).chain(subset.names().into_iter().map(str::to_string)).collect();
    let mut scaling = vec![(0.0, 1.0); subset.columns.len()];
    if cfg.standardize {
        for (j, &col) in subset.columns.iter().enumerate() {
            let m = pairs.iter().map(|p| p.delta[col]).sum::<f64>() / n as f64;
            let v = pairs.iter().map(|p| (p.delta[col] - m).powi(2)).sum::<f64>() / n as f64;
            if v > 0.0 {
                scaling[j] = (m, v.sqrt());
            }
        }
    }
    let zero_cols: Vec<bool> = subset.columns.iter().map(|&col| pairs.iter().all(|p| p.delta[col] == 0.0)).collect();
    // Active design columns: intercept plus non-zero feature columns.
    let active: Vec<usize> =
        std::iter::once(0).chain((0..subset.columns.len()).filter(|&j| !zero_cols[j]).map(|j| j + 1)).collect();
    let x: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| {
            active
                .iter()
                .map(|&a| {
                    if a == 0 {
                        1.0
                    } else {
                        let (m, s) = scaling[a - 1];
                        (p.delta[subset.columns[a - 1]] - m) / s
                    }
                })
                .collect()
        })
        .collect();
    let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.label)).collect();
    let d = active.len();

    let gradient_and_info = |beta: &[f64]| {
        let mut g = vec![0.0; d];
        let mut h = vec![vec![0.0; d]; d];
        let mut all_fit = true;
        for (xi, &yi) in x.iter().zip(&y) {
            let eta: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(eta);
            let r = yi - p;
            if r.abs() >= 1e-6 {
                all_fit = false;
            }
            let w = p * (1.0 - p);
            for a in 0..d {
                g[a] += xi[a] * r;
                for b in 0..=a {
                    h[a][b] += w * xi[a] * xi[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[b][a] = h[a][b];
            }
        }
        (g, h, all_fit)
    };
    let singular = |h: &[Vec<f64>], k: usize| {
        RankError::Collinear(collinear_set(h, k).into_iter().map(|i| names[active[i]].clone()).collect())
    };

    let mut beta = vec![0.0; d];
    let mut iterations = 0;
    let mut converged = false;
    let mut separated = false;
    loop {
        let (g, h, all_fit) = gradient_and_info(&beta);
        let max_score = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_score < cfg.score_tol {
            converged = true;
            break;
        }
        if all_fit && iterations > 0 {
            separated = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        let l = cholesky(&h).map_err(|k| singular(&h, k))?;
        let step = chol_solve(&l, &g);
        iterations += 1;
        let bmax = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let smax = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
        if smax <= 1e-13 * (1.0 + bmax) {
            converged = true;
            break;
        }
    }

    let (g, h, _) = gradient_and_info(&beta);
    let max_score = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let se: Vec<f64> = match cholesky(&h) {
        Ok(l) => (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                chol_solve(&l, &e)[i].sqrt()
            })
            .collect(),
        Err(_) if separated => vec![f64::INFINITY; d],
        Err(k) => return Err(singular(&h, k)),
    };
    let log_likelihood: f64 = x
        .iter()
        .zip(&y)
        .map(|(xi, &yi)| {
            let eta: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            yi * eta - softplus(eta)
        })
        .sum();

    let mut coefficients: Vec<Coefficient> = Vec::with_capacity(names.len());
    let mut uninformative = Vec::new();
    for (full, name) in names.iter().enumerate() {
        match active.iter().position(|&a| a == full) {
            Some(i) => coefficients.push(Coefficient::new(name.clone(), beta[i], se[i])),
            None => {
                uninformative.push(name.clone());
                coefficients.push(Coefficient { name: name.clone(), beta: 0.0, se: f64::INFINITY, t: 0.0 });
            }
        }
    }
    Ok(RegressionReport {
        subset: subset.clone(),
        coefficients,
        n,
        log_likelihood,
        iterations,
        converged,
        separated,
        max_score,
        uninformative,
        standardized: cfg.standardize,
        scaling,
    })
}

/// Fold index per group: sorted unique groups shuffled with the seed, then
/// dealt round-robin.
pub fn fold_assignment(pairs: &[PairInstance], k: usize, seed: u64) -> Result<HashMap<String, usize>, RankError> {
    if k < 2 {
        return Err(RankError::BadFolds);
    }
    let groups: BTreeSet<&str> = pairs.iter().map(|p| p.group_id.as_str()).collect();
    if groups.len() < k {
        return Err(RankError::TooFewGroups { groups: groups.len(), k });
    }
    let mut groups: Vec<&str> = groups.into_iter().collect();
    SplitMix64::for_item(seed, "folds").shuffle(&mut groups);
    Ok(groups.into_iter().enumerate().map(|(i, g)| (g.to_string(), i % k)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub subset: FeatureSubset,
    /// Aligned with the input pairs.
    pub predicted: Vec<u8>,
    pub probability: Vec<f64>,
    pub gold: Vec<u8>,
    pub fold: Vec<usize>,
}

impl PredictionTable {
    pub fn correct(&self) -> usize {
        self.predicted.iter().zip(&self.gold).filter(|(a, b)| a == b).count()
    }

    pub fn accuracy(&self) -> f64 {
        if self.gold.is_empty() {
            return 0.0;
        }
        self.correct() as f64 / self.gold.len() as f64
    }

    pub fn to_tsv(&self, pairs: &[PairInstance]) -> String {
        let mut out = String::from("pair\tgroup_id\tfold\tgold\tpredicted\tprobability\n");
        for (i, p) in pairs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i}\t{}\t{}\t{}\t{}\t{:?}",
                p.group_id, self.fold[i], self.gold[i], self.predicted[i], self.probability[i]
            );
        }
        out
    }
}

/// Grouped k-fold cross-validation. Each fold's pairs are predicted by a model
/// fitted on the other folds; a pair is predicted 1 iff the fitted
/// probability exceeds 0.5.
pub fn cross_validate(
    pairs: &[PairInstance],
    k: usize,
    subsets: &[FeatureSubset],
    seed: u64,
    cfg: &FitConfig,
) -> Result<Vec<PredictionTable>, RankError> {
    let folds = fold_assignment(pairs, k, seed)?;
    let fold: Vec<usize> = pairs.iter().map(|p| folds[&p.group_id]).collect();
    let gold: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    subsets
        .iter()
        .map(|subset| {
            let fold_probs: Vec<Vec<(usize, f64)>> = (0..k)
                .into_par_iter()
                .map(|f| {
                    let train: Vec<PairInstance> =
                        pairs.iter().zip(&fold).filter(|(_, &g)| g != f).map(|(p, _)| p.clone()).collect();
                    let model = fit_logistic(&train, subset, cfg)?;
                    Ok(pairs
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| fold[*i] == f)
                        .map(|(i, p)| (i, model.predict_proba(&p.delta)))
                        .collect())
                })
                .collect::<Result<_, RankError>>()?;
            let mut probability = vec![0.0; pairs.len()];
            for (i, p) in fold_probs.into_iter().flatten() {
                probability[i] = p;
            }
            let predicted = probability.iter().map(|&p| u8::from(p > 0.5)).collect();
            Ok(PredictionTable {
                subset: subset.clone(),
                predicted,
                probability,
                gold: gold.clone(),
                fold: fold.clone(),
            })
        })
        .collect()
}

/// Discordant counts: `b` = A right and B wrong, `c` = A wrong and B right.
pub fn discordant(pred_a: &[u8], pred_b: &[u8], gold: &[u8]) -> Result<(u64, u64), RankError> {
    if pred_a.len() != gold.len() || pred_b.len() != gold.len() {
        return Err(RankError::LengthMismatch);
    }
    let (mut b, mut c) = (0, 0);
    for i in 0..gold.len() {
        match (pred_a[i] == gold[i], pred_b[i] == gold[i]) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok((b, c))
}

/// Two-tailed exact binomial p on discordant counts, capped at 1.
pub fn mcnemar_exact_p(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    (2.0 * binomial_half_cdf(b.min(c), n)).min(1.0)
}

/// Chi-square with continuity correction on one degree of freedom.
pub fn mcnemar_chi2_p(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let diff = (b.abs_diff(c) as f64 - 1.0).max(0.0);
    chi2_sf(diff * diff / n as f64, 1.0)
}

/// Exact test below 50 discordant pairs, corrected chi-square from 50 on.
pub fn mcnemar_from_counts(b: u64, c: u64) -> f64 {
    if b + c < 50 {
        mcnemar_exact_p(b, c)
    } else {
        mcnemar_chi2_p(b, c)
    }
}

pub fn mcnemar(pred_a: &[u8], pred_b: &[u8], gold: &[u8]) -> Result<f64, RankError> {
    let (b, c) = discordant(pred_a, pred_b, gold)?;
    Ok(mcnemar_from_counts(b, c))
}

/// `chi2 = 2 (LL_full - LL_reduced)` on the difference in column count.
pub fn likelihood_ratio_test(full: &RegressionReport, reduced: &RegressionReport) -> Result<(f64, f64), RankError> {
    if !reduced.subset.is_subset_of(&full.subset) || full.n != reduced.n {
        return Err(RankError::NotNested);
    }
    let dof = full.subset.columns.len() - reduced.subset.columns.len();
    let chi2 = (2.0 * (full.log_likelihood - reduced.log_likelihood)).max(0.0);
    if dof == 0 {
        return Ok((0.0, 1.0));
    }
    Ok((chi2, chi2_sf(chi2, dof as f64)))
}
