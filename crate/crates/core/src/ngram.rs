//! Trigram language model with Good-Turing discounting and Katz backoff, and
//! the unigram-cache mixture used for lexical-repetition surprisal.
//!
//! Sentences are padded as `<s> <s> w1 .. wm </s>`; every position from `w1`
//! through `</s>` is a predicted event at all three orders, so lower-order
//! counts are marginals of the higher-order ones. `<s>` is never predicted and
//! gets probability zero.
//!
//! Discounting: for each order, counts `1..=gt_max` are discounted by the Katz
//! form of Good-Turing, `d_r = (r*/r - A) / (1 - A)` with
//! `r* = (r+1) n_{r+1} / n_r` and `A = (k+1) n_{k+1} / n_1`. Zero entries in
//! the counts-of-counts are replaced by a log-linear fit `ln n_r = a + b ln r`
//! over the non-zero entries. A coefficient outside `(0, 1]` is reset to 1,
//! and discounting is switched off for an order when `A >= 1` or `n_1 = 0`.
//!
//! Each context keeps the discounted mass of its seen continuations and hands
//! the remainder to the lower order through a backoff weight. Two degenerate
//! cases are closed explicitly so every conditional distribution sums to one:
//! if every vocabulary word was seen after the context, the seen mass is
//! renormalised; if discounting left no mass but unseen words remain, the
//! context reserves `1 / (c + 1)` for them.

// Matrix and table code reads best with explicit indices.
#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::vocab::{Vocab, WordId, BOS_ID, EOS_ID};

pub const DEFAULT_MIN_COUNT: usize = 2;
pub const DEFAULT_GT_MAX: usize = 7;
pub const DEFAULT_CACHE_WEIGHT: f64 = 0.05;
pub const DEFAULT_CACHE_SIZE: usize = 100;

const FORMAT_TAG: &str = "orderlab-ngram";
const FORMAT_VERSION: u32 = 1;
const NO_MASS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Two,
    E,
}

impl LogBase {
    pub fn surprisal(self, p: f64) -> f64 {
        match self {
            LogBase::Two => -p.log2(),
            LogBase::E => -p.ln(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "2" => Some(LogBase::Two),
            "e" | "E" => Some(LogBase::E),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Two => "2",
            LogBase::E => "e",
        }
    }
}

/// Per-token surprisal of one sentence and its sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalScore {
    pub per_token: Vec<f64>,
    pub total: f64,
}

impl SurprisalScore {
    pub fn new(per_token: Vec<f64>) -> Self {
        let total = per_token.iter().sum();
        Self { per_token, total }
    }

    pub fn zero() -> Self {
        Self { per_token: Vec::new(), total: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    pub min_count: usize,
    pub gt_max: usize,
    pub log_base: LogBase,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self { min_count: DEFAULT_MIN_COUNT, gt_max: DEFAULT_GT_MAX, log_base: LogBase::Two }
    }
}

/// Normalisation data for one context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextWeights {
    pub count: u64,
    /// Multiplier on discounted relative frequencies (1 unless degenerate).
    pub scale: f64,
    /// Katz backoff weight applied to the lower-order distribution.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigramLm {
    vocab: Vocab,
    config: NgramConfig,
    unigram_counts: Vec<u64>,
    bigram_counts: HashMap<(WordId, WordId), u64>,
    trigram_counts: HashMap<(WordId, WordId, WordId), u64>,
    /// `discounts[order - 1][r]` for `r` in `1..=gt_max`; index 0 unused.
    discounts: [Vec<f64>; 3],
    unigram_probs: Vec<f64>,
    unigram_leftover: f64,
    bigram_ctx: HashMap<WordId, ContextWeights>,
    trigram_ctx: HashMap<(WordId, WordId), ContextWeights>,
}

pub fn train_trigram<S: AsRef<str>>(sentences: &[Vec<S>], config: NgramConfig) -> Result<TrigramLm, NgramError> {
    TrigramLm::train(sentences, config)
}

impl TrigramLm {
    pub fn train<S: AsRef<str>>(sentences: &[Vec<S>], config: NgramConfig) -> Result<Self, NgramError> {
        if sentences.is_empty() {
            return Err(NgramError::EmptyCorpus);
        }
        let vocab = Vocab::build(sentences, config.min_count.max(1));
        let mut unigram_counts = vec![0u64; vocab.len()];
        let mut bigram_counts: HashMap<(WordId, WordId), u64> = HashMap::new();
        let mut trigram_counts: HashMap<(WordId, WordId, WordId), u64> = HashMap::new();
        for s in sentences {
            let ids = padded(&vocab, s);
            for i in 2..ids.len() {
                unigram_counts[ids[i] as usize] += 1;
                *bigram_counts.entry((ids[i - 1], ids[i])).or_default() += 1;
                *trigram_counts.entry((ids[i - 2], ids[i - 1], ids[i])).or_default() += 1;
            }
        }
        let discounts = [
            good_turing_discounts(unigram_counts.iter().copied().filter(|&c| c > 0), config.gt_max),
            good_turing_discounts(bigram_counts.values().copied(), config.gt_max),
            good_turing_discounts(trigram_counts.values().copied(), config.gt_max),
        ];
        let mut lm = Self {
            vocab,
            config,
            unigram_counts,
            bigram_counts,
            trigram_counts,
            discounts,
            unigram_probs: Vec::new(),
            unigram_leftover: 0.0,
            bigram_ctx: HashMap::new(),
            trigram_ctx: HashMap::new(),
        };
        lm.estimate();
        Ok(lm)
    }

    fn estimate(&mut self) {
        let predicted = self.vocab.len() - 1;

        // Unigrams: leftover goes to zero-count words, or to every word if
        // all were seen.
        let total: u64 = self.unigram_counts.iter().sum();
        let n = total as f64;
        let mut probs = vec![0.0; self.vocab.len()];
        let mut seen_mass = 0.0;
        for (w, &c) in self.unigram_counts.iter().enumerate() {
            if c > 0 {
                probs[w] = self.discount(1, c) * c as f64 / n;
                seen_mass += probs[w];
            }
        }
        let zero: Vec<usize> =
            (0..self.vocab.len()).filter(|&w| w != BOS_ID as usize && self.unigram_counts[w] == 0).collect();
        let mut leftover = 1.0 - seen_mass;
        if !zero.is_empty() && leftover <= NO_MASS {
            let scale = n / ((n + 1.0) * seen_mass);
            probs.iter_mut().for_each(|p| *p *= scale);
            leftover = 1.0 / (n + 1.0);
        }
        self.unigram_leftover = leftover;
        if zero.is_empty() {
            let share = leftover / predicted as f64;
            for (w, p) in probs.iter_mut().enumerate() {
                if w != BOS_ID as usize {
                    *p += share;
                }
            }
        } else {
            let share = leftover / zero.len() as f64;
            for w in zero {
                probs[w] = share;
            }
        }
        self.unigram_probs = probs;

        // Bigram contexts.
        let mut followers: HashMap<WordId, Vec<(WordId, u64)>> = HashMap::new();
        for (&(v, w), &c) in &self.bigram_counts {
            followers.entry(v).or_default().push((w, c));
        }
        let mut bigram_ctx = HashMap::new();
        for (v, mut f) in followers {
            f.sort_unstable();
            let weights = self.context_weights(2, &f, predicted, |w| self.unigram_probs[w as usize]);
            bigram_ctx.insert(v, weights);
        }
        self.bigram_ctx = bigram_ctx;

        let mut followers: HashMap<(WordId, WordId), Vec<(WordId, u64)>> = HashMap::new();
        for (&(u, v, w), &c) in &self.trigram_counts {
            followers.entry((u, v)).or_default().push((w, c));
        }
        let mut trigram_ctx = HashMap::new();
        for ((u, v), mut f) in followers {
            f.sort_unstable();
            let weights = self.context_weights(3, &f, predicted, |w| self.prob_bigram(v, w));
            trigram_ctx.insert((u, v), weights);
        }
        self.trigram_ctx = trigram_ctx;
    }

    fn context_weights(
        &self,
        order: usize,
        followers: &[(WordId, u64)],
        predicted: usize,
        lower: impl Fn(WordId) -> f64,
    ) -> ContextWeights {
        let count: u64 = followers.iter().map(|&(_, c)| c).sum();
        let cf = count as f64;
        let seen_mass: f64 = followers.iter().map(|&(_, c)| self.discount(order, c) * c as f64 / cf).sum();
        let lower_seen: f64 = followers.iter().map(|&(w, _)| lower(w)).sum();
        let lower_unseen = 1.0 - lower_seen;
        if followers.len() >= predicted || lower_unseen <= NO_MASS {
            return ContextWeights { count, scale: 1.0 / seen_mass, alpha: 0.0 };
        }
        let leftover = 1.0 - seen_mass;
        if leftover <= NO_MASS {
            let scale = cf / ((cf + 1.0) * seen_mass);
            return ContextWeights { count, scale, alpha: (1.0 / (cf + 1.0)) / lower_unseen };
        }
        ContextWeights { count, scale: 1.0, alpha: leftover / lower_unseen }
    }

    fn discount(&self, order: usize, count: u64) -> f64 {
        let table = &self.discounts[order - 1];
        if (count as usize) < table.len() {
            table[count as usize]
        } else {
            1.0
        }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    pub fn log_base(&self) -> LogBase {
        self.config.log_base
    }

    /// Discount coefficients of one order, indexed by count (index 0 unused).
    pub fn discounts(&self, order: usize) -> &[f64] {
        &self.discounts[order - 1]
    }

    /// Unigram probability mass reserved for unseen events before it is
    /// spread over the vocabulary.
    pub fn unigram_leftover(&self) -> f64 {
        self.unigram_leftover
    }

    pub fn unigram_count(&self, w: WordId) -> u64 {
        self.unigram_counts[w as usize]
    }

    pub fn bigram_count(&self, v: WordId, w: WordId) -> u64 {
        self.bigram_counts.get(&(v, w)).copied().unwrap_or(0)
    }

    pub fn trigram_count(&self, u: WordId, v: WordId, w: WordId) -> u64 {
        self.trigram_counts.get(&(u, v, w)).copied().unwrap_or(0)
    }

    /// Backoff weight of a seen bigram context `(u, v)`; 1 for unseen contexts.
    pub fn backoff_weight(&self, u: WordId, v: WordId) -> f64 {
        self.trigram_ctx.get(&(u, v)).map(|c| c.alpha).unwrap_or(1.0)
    }

    pub fn bigram_context(&self, v: WordId) -> Option<&ContextWeights> {
        self.bigram_ctx.get(&v)
    }

    pub fn trigram_context(&self, u: WordId, v: WordId) -> Option<&ContextWeights> {
        self.trigram_ctx.get(&(u, v))
    }

    pub fn prob_unigram(&self, w: WordId) -> f64 {
        self.unigram_probs[w as usize]
    }

    pub fn prob_bigram(&self, v: WordId, w: WordId) -> f64 {
        match self.bigram_ctx.get(&v) {
            None => self.prob_unigram(w),
            Some(ctx) => match self.bigram_counts.get(&(v, w)) {
                Some(&c) => ctx.scale * self.discount(2, c) * c as f64 / ctx.count as f64,
                None => ctx.alpha * self.prob_unigram(w),
            },
        }
    }

    /// `P(w | u v)`.
    pub fn prob(&self, u: WordId, v: WordId, w: WordId) -> f64 {
        match self.trigram_ctx.get(&(u, v)) {
            None => self.prob_bigram(v, w),
            Some(ctx) => match self.trigram_counts.get(&(u, v, w)) {
                Some(&c) => ctx.scale * self.discount(3, c) * c as f64 / ctx.count as f64,
                None => ctx.alpha * self.prob_bigram(v, w),
            },
        }
    }

    /// Per-position trigram probabilities for `w1 .. wm </s>`.
    pub fn token_probs<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<f64> {
        let ids = padded(&self.vocab, sentence);
        (2..ids.len()).map(|i| self.prob(ids[i - 2], ids[i - 1], ids[i])).collect()
    }

    pub fn sentence_surprisal<S: AsRef<str>>(&self, sentence: &[S]) -> SurprisalScore {
        let base = self.config.log_base;
        SurprisalScore::new(self.token_probs(sentence).into_iter().map(|p| base.surprisal(p)).collect())
    }

    /// Cache-mixed surprisal: `-log(mu * count_H(w)/|H| + (1 - mu) * P(w|ctx))`.
    /// An empty history gives exactly the plain trigram score.
    pub fn cache_sentence_surprisal<S: AsRef<str>>(&self, cache: &CacheState, sentence: &[S]) -> SurprisalScore {
        let base = self.config.log_base;
        let ids = padded(&self.vocab, sentence);
        let per_token = (2..ids.len())
            .map(|i| {
                let p = self.prob(ids[i - 2], ids[i - 1], ids[i]);
                base.surprisal(cache.mix(ids[i], p))
            })
            .collect();
        SurprisalScore::new(per_token)
    }

    /// Serialises to the versioned text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}");
        let _ = writeln!(out, "order\t3");
        let _ = writeln!(out, "vocab_size\t{}", self.vocab.len());
        let _ = writeln!(out, "log_base\t{}", c.log_base.as_str());
        let _ = writeln!(out, "gt_max\t{}", c.gt_max);
        let _ = writeln!(out, "min_count\t{}", c.min_count);
        let _ = writeln!(out, "unigram_leftover\t{:?}", self.unigram_leftover);
        out.push_str("\\discounts\n");
        for (i, d) in self.discounts.iter().enumerate() {
            let vals: Vec<String> = d.iter().skip(1).map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "{}\t{}", i + 1, vals.join("\t"));
        }
        out.push_str("\\unigrams\n");
        for (w, word) in self.vocab.words().iter().enumerate() {
            let _ = writeln!(out, "{word}\t{}\t{:?}", self.unigram_counts[w], self.unigram_probs[w]);
        }
        let word = |id: WordId| self.vocab.word(id);
        out.push_str("\\bigram-contexts\n");
        for (v, ctx) in sorted(&self.bigram_ctx) {
            let _ = writeln!(out, "{}\t{}\t{:?}\t{:?}", word(*v), ctx.count, ctx.scale, ctx.alpha);
        }
        out.push_str("\\bigrams\n");
        for ((v, w), c) in sorted(&self.bigram_counts) {
            let _ = writeln!(out, "{}\t{}\t{c}", word(*v), word(*w));
        }
        out.push_str("\\trigram-contexts\n");
        for ((u, v), ctx) in sorted(&self.trigram_ctx) {
            let _ = writeln!(out, "{}\t{}\t{}\t{:?}\t{:?}", word(*u), word(*v), ctx.count, ctx.scale, ctx.alpha);
        }
        out.push_str("\\trigrams\n");
        for ((u, v, w), c) in sorted(&self.trigram_counts) {
            let _ = writeln!(out, "{}\t{}\t{}\t{c}", word(*u), word(*v), word(*w));
        }
        out.push_str("\\end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NgramError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, m: &str| NgramError::Format { line, message: m.to_string() };
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some(FORMAT_TAG) || hp.next() != Some(&FORMAT_VERSION.to_string()) {
            return Err(err(1, "unrecognised header"));
        }
        let mut fields: HashMap<String, String> = HashMap::new();
        let mut section = String::new();
        let mut words: Vec<String> = Vec::new();
        let mut unigram_counts = Vec::new();
        let mut unigram_probs = Vec::new();
        let mut discounts: [Vec<f64>; 3] = Default::default();
        let mut raw_bctx: Vec<(usize, Vec<String>)> = Vec::new();
        let mut raw_big: Vec<(usize, Vec<String>)> = Vec::new();
        let mut raw_tctx: Vec<(usize, Vec<String>)> = Vec::new();
        let mut raw_tri: Vec<(usize, Vec<String>)> = Vec::new();
        for (n, line) in lines {
            if let Some(s) = line.strip_prefix('\\') {
                section = s.to_string();
                continue;
            }
            let f: Vec<String> = line.split('\t').map(str::to_string).collect();
            match section.as_str() {
                "" => {
                    if f.len() != 2 {
                        return Err(err(n, "expected key<TAB>value"));
                    }
                    fields.insert(f[0].clone(), f[1].clone());
                }
                "discounts" => {
                    let order: usize = parse(n, &f[0])?;
                    if !(1..=3).contains(&order) {
                        return Err(err(n, "order out of range"));
                    }
                    let mut d = vec![1.0];
                    for x in f.iter().skip(1).filter(|x| !x.is_empty()) {
                        d.push(parse(n, x)?);
                    }
                    discounts[order - 1] = d;
                }
                "unigrams" => {
                    if f.len() != 3 {
                        return Err(err(n, "expected word, count, prob"));
                    }
                    words.push(f[0].clone());
                    unigram_counts.push(parse(n, &f[1])?);
                    unigram_probs.push(parse(n, &f[2])?);
                }
                "bigram-contexts" => raw_bctx.push((n, f)),
                "bigrams" => raw_big.push((n, f)),
                "trigram-contexts" => raw_tctx.push((n, f)),
                "trigrams" => raw_tri.push((n, f)),
                "end" => {}
                other => return Err(err(n, &format!("unknown section {other:?}"))),
            }
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| err(1, &format!("missing header field {k}")));
        let log_base = LogBase::parse(get("log_base")?).ok_or_else(|| err(1, "bad log_base"))?;
        let config =
            NgramConfig { min_count: parse(1, get("min_count")?)?, gt_max: parse(1, get("gt_max")?)?, log_base };
        let vocab_size: usize = parse(1, get("vocab_size")?)?;
        if words.len() != vocab_size || words.len() < 3 {
            return Err(err(1, "vocabulary size mismatch"));
        }
        let vocab = Vocab::from_words(words.into_iter().skip(3));
        let id = |n: usize, w: &str| -> Result<WordId, NgramError> {
            if vocab.contains(w) {
                Ok(vocab.id(w))
            } else {
                Err(err(n, &format!("unknown word {w:?}")))
            }
        };
        let ctx = |n: usize, f: &[String]| -> Result<ContextWeights, NgramError> {
            Ok(ContextWeights { count: parse(n, &f[0])?, scale: parse(n, &f[1])?, alpha: parse(n, &f[2])? })
        };
        let mut bigram_ctx = HashMap::new();
        for (n, f) in raw_bctx {
            if f.len() != 4 {
                return Err(err(n, "expected 4 fields"));
            }
            bigram_ctx.insert(id(n, &f[0])?, ctx(n, &f[1..])?);
        }
        let mut bigram_counts = HashMap::new();
        for (n, f) in raw_big {
            if f.len() != 3 {
                return Err(err(n, "expected 3 fields"));
            }
            bigram_counts.insert((id(n, &f[0])?, id(n, &f[1])?), parse(n, &f[2])?);
        }
        let mut trigram_ctx = HashMap::new();
        for (n, f) in raw_tctx {
            if f.len() != 5 {
                return Err(err(n, "expected 5 fields"));
            }
            trigram_ctx.insert((id(n, &f[0])?, id(n, &f[1])?), ctx(n, &f[2..])?);
        }
        let mut trigram_counts = HashMap::new();
        for (n, f) in raw_tri {
            if f.len() != 4 {
                return Err(err(n, "expected 4 fields"));
            }
            trigram_counts.insert((id(n, &f[0])?, id(n, &f[1])?, id(n, &f[2])?), parse(n, &f[3])?);
        }
        Ok(Self {
            vocab,
            config,
            unigram_counts,
            bigram_counts,
            trigram_counts,
            discounts,
            unigram_probs,
            unigram_leftover: parse(1, get("unigram_leftover")?)?,
            bigram_ctx,
            trigram_ctx,
        })
    }
}

fn parse<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, NgramError> {
    s.parse().map_err(|_| NgramError::Format { line, message: format!("cannot parse {s:?}") })
}

fn sorted<K: Ord, V>(m: &HashMap<K, V>) -> Vec<(&K, &V)> {
    let mut v: Vec<_> = m.iter().collect();
    v.sort_by(|a, b| a.0.cmp(b.0));
    v
}

fn padded<S: AsRef<str>>(vocab: &Vocab, sentence: &[S]) -> Vec<WordId> {
    let mut ids = Vec::with_capacity(sentence.len() + 3);
    ids.push(BOS_ID);
    ids.push(BOS_ID);
    ids.extend(sentence.iter().map(|w| vocab.id(w.as_ref())));
    ids.push(EOS_ID);
    ids
}

/// Katz-renormalised Good-Turing coefficients for counts `1..=k`.
pub fn good_turing_discounts(counts: impl Iterator<Item = u64>, k: usize) -> Vec<f64> {
    let mut cc: HashMap<u64, f64> = HashMap::new();
    for c in counts {
        *cc.entry(c).or_default() += 1.0;
    }
    let mut d = vec![1.0; k + 1];
    let n1 = cc.get(&1).copied().unwrap_or(0.0);
    if k == 0 || n1 == 0.0 {
        return d;
    }
    let fit = log_linear_fit(&cc);
    let smoothed = |r: u64| -> f64 {
        match cc.get(&r) {
            Some(&n) => n,
            None => fit.map(|(a, b)| (a + b * (r as f64).ln()).exp()).unwrap_or(0.0),
        }
    };
    let common = (k as f64 + 1.0) * smoothed(k as u64 + 1) / n1;
    if common >= 1.0 {
        return d;
    }
    for r in 1..=k {
        let nr = smoothed(r as u64);
        if nr <= 0.0 {
            continue;
        }
        let r_star = (r as f64 + 1.0) * smoothed(r as u64 + 1) / nr;
        let coeff = (r_star / r as f64 - common) / (1.0 - common);
        if coeff.is_finite() && coeff > 0.0 && coeff <= 1.0 {
            d[r] = coeff;
        }
    }
    d
}

/// Least-squares fit of `ln n_r` on `ln r` over non-zero counts-of-counts.
fn log_linear_fit(cc: &HashMap<u64, f64>) -> Option<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = cc.iter().map(|(&r, &n)| ((r as f64).ln(), n.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Word history of the single preceding sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    history: Vec<WordId>,
    counts: HashMap<WordId, usize>,
    mu: f64,
    max_len: usize,
}

impl Default for CacheState {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_WEIGHT)
    }
}

impl CacheState {
    pub fn new(mu: f64) -> Self {
        assert!((0.0..=1.0).contains(&mu), "cache weight must lie in [0, 1]");
        Self { history: Vec::new(), counts: HashMap::new(), mu, max_len: DEFAULT_CACHE_SIZE }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn history(&self) -> &[WordId] {
        &self.history
    }

    /// Replaces the history with (the last `max_len` words of) `context`.
    pub fn update<S: AsRef<str>>(&mut self, vocab: &Vocab, context: &[S]) {
        let skip = context.len().saturating_sub(self.max_len);
        self.history = vocab.encode(&context[skip..]);
        self.counts.clear();
        for &w in &self.history {
            *self.counts.entry(w).or_default() += 1;
        }
    }

    /// `count_H(w) / |H|`, zero for an empty history.
    pub fn prob(&self, w: WordId) -> f64 {
        if self.history.is_empty() {
            return 0.0;
        }
        self.counts.get(&w).copied().unwrap_or(0) as f64 / self.history.len() as f64
    }

    /// Mixture with a base probability.
    pub fn mix(&self, w: WordId, base: f64) -> f64 {
        if self.history.is_empty() {
            base
        } else {
            self.mu * self.prob(w) + (1.0 - self.mu) * base
        }
    }
}

pub fn update_cache<S: AsRef<str>>(cache: &CacheState, lm: &TrigramLm, context: &[S]) -> CacheState {
    let mut next = cache.clone();
    next.update(lm.vocab(), context);
    next
}
