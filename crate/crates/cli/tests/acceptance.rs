//! Acceptance criteria for the library and the evaluation service. Each
//! criterion prints one PASS or FAIL line with its measurements; the process
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use orderlab_core::corpus::{parse_treebank, ColumnMap, DependencyTree, Document, Token};
use orderlab_core::features::{
    assemble_features, dependency_length, is_score, row_key, ExternalColumn, FeatureVector, IsConfig, Scorers,
};
use orderlab_core::lstm::{
    adapt_and_score, gradient_check, lstm_sentence_surprisal, train_lstm, AdaptationConfig, LstmDims, LstmLm,
    LstmTrainConfig,
};
use orderlab_core::ngram::{CacheState, LogBase, NgramConfig, TrigramLm};
use orderlab_core::ranker::{
    cross_validate, discordant, fit_logistic, make_pairs, mcnemar, mcnemar_chi2_p, mcnemar_exact_p, sets_from_rows,
    FeatureSubset, FitConfig, PairInstance, ScoredSet, N_FEATURES,
};
use orderlab_core::rng::SplitMix64;
use orderlab_core::synthetic::{generate_lm_corpus, generate_treebank, SyntheticConfig};
use orderlab_core::variantgen::{generate_variants, preverbal_constituents, AttestedGrammar, VariantSet};
use orderlab_evalsvc::{parse_pool, router, AppState, JudgmentLog};
use serde_json::{json, Value};
use tower::ServiceExt;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs one criterion, enforcing its runtime limit, and prints its line.
fn criterion(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let elapsed = start.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(detail), Some(l)) if elapsed > l => Err(format!("{detail}; runtime {elapsed:.2?} exceeds {l:?}")),
        (o, _) => o,
    };
    match &outcome {
        Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
        Err(detail) => println!("FAIL  {name}: {detail} [{elapsed:.2?}]"),
    }
    outcome.is_ok()
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn small_lstm(dims: LstmDims, sentences: usize) -> LstmLm {
    let cfg = LstmTrainConfig { dims, epochs: 1, base_lr: 1.0, min_count: 1, seed: 3, ..Default::default() };
    train_lstm(&generate_lm_corpus(sentences, 5), None, &cfg).expect("toy training converges")
}

/// Sentences of 3 to 10 words drawn uniformly from the model vocabulary,
/// including the unknown-word symbol.
fn random_sentences(lm: &LstmLm, n: usize, seed: u64) -> Vec<Vec<String>> {
    let words = lm.vocab().words();
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let len = 3 + rng.below(8) as usize;
            (0..len).map(|_| words[1 + rng.below(words.len() as u64 - 1) as usize].clone()).collect()
        })
        .collect()
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn adaptive_identity() -> Check {
    let lm = small_lstm(LstmDims { d_emb: 8, d_hidden: 8, n_layers: 2 }, 60);
    let targets = random_sentences(&lm, 50, 1);
    let contexts = random_sentences(&lm, 50, 2);
    let cfg = AdaptationConfig { learning_rate: 0.0, grad_clip_norm: 0.25 };
    for (ctx, tgt) in contexts.iter().zip(&targets) {
        let adapted = &adapt_and_score(&lm, ctx, std::slice::from_ref(tgt), &cfg)[0];
        let plain = lstm_sentence_surprisal(&lm, tgt);
        ensure(
            bits_equal(&adapted.per_token, &plain.per_token) && adapted.total.to_bits() == plain.total.to_bits(),
            || format!("{tgt:?}: {} vs {}", adapted.total, plain.total),
        )?;
    }
    Ok("50 sentences bit-identical at learning rate 0".into())
}

fn gradient_fidelity() -> Check {
    let lm = small_lstm(LstmDims { d_emb: 8, d_hidden: 8, n_layers: 2 }, 40);
    let sentences = generate_lm_corpus(10, 77);
    let mut worst: f64 = 0.0;
    for s in &sentences {
        worst = worst.max(gradient_check(&lm, s, 1e-4).max_relative_error);
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e} >= 1e-4"))?;
    Ok(format!("max relative error {worst:.3e} at epsilon 1e-4 over {} parameters x 10 sentences", lm.params().len()))
}

fn weight_restore_purity() -> Check {
    let lm = small_lstm(LstmDims { d_emb: 8, d_hidden: 8, n_layers: 1 }, 60);
    let before = lm.params().to_vec();
    let probe = toks("kal raam ne dost ko kitaab di tha");
    let base = lstm_sentence_surprisal(&lm, &probe);
    let contexts = random_sentences(&lm, 100, 3);
    let targets = random_sentences(&lm, 100, 4);
    let cfg = AdaptationConfig { learning_rate: 20.0, grad_clip_norm: 0.25 };
    for (i, (ctx, tgt)) in contexts.iter().zip(&targets).enumerate() {
        let adapted = &adapt_and_score(&lm, ctx, std::slice::from_ref(tgt), &cfg)[0];
        ensure(adapted.total != lstm_sentence_surprisal(&lm, tgt).total, || format!("call {i} did not adapt"))?;
        let now = lstm_sentence_surprisal(&lm, &probe);
        ensure(bits_equal(&now.per_token, &base.per_token), || format!("probe changed after call {i}"))?;
    }
    ensure(bits_equal(lm.params(), &before), || "weights changed".into())?;
    Ok(format!("probe bit-identical across 100 calls; {} adaptations counted", lm.adaptation_count()))
}

const CACHE_CORPUS: [&str; 5] = [
    "the cat sat on the mat with a hat",
    "the dog sat on the log near a frog",
    "a cat saw the dog and ran home",
    "the cat sat by the door",
    "a big dog saw a small cat on the mat",
];

fn cache_oracle() -> Check {
    let corpus: Vec<Vec<String>> = CACHE_CORPUS.iter().map(|s| toks(s)).collect();
    let lm = TrigramLm::train(&corpus, NgramConfig { min_count: 1, gt_max: 7, log_base: LogBase::Two })
        .map_err(|e| e.to_string())?;
    let history = &corpus[0];
    let target = &corpus[3];
    // Katz trigram probabilities for "the cat sat by the door </s>" from an
    // independent implementation.
    let base = [
        0.36277370129503383,
        0.19432509954559354,
        0.29148764931839033,
        0.14276688200927246,
        0.2855337640185449,
        0.2855337640185449,
        0.2855337640185449,
    ];
    let mut cache = CacheState::new(0.05);
    cache.update(lm.vocab(), history);
    let plain = lm.token_probs(target);
    let mixed = lm.cache_sentence_surprisal(&cache, target);
    let words: Vec<&str> = target.iter().map(String::as_str).chain(["</s>"]).collect();
    let mut worst: f64 = 0.0;
    for (i, w) in words.iter().enumerate() {
        let in_history = history.iter().filter(|h| h.as_str() == *w).count() as f64;
        let oracle = 0.05 * in_history / history.len() as f64 + 0.95 * base[i];
        worst = worst.max((plain[i] - base[i]).abs());
        worst = worst.max((2f64.powf(-mixed.per_token[i]) - oracle).abs());
    }
    ensure(worst < 1e-9, || format!("worst deviation {worst:.3e}"))?;
    let mut off = CacheState::new(0.0);
    off.update(lm.vocab(), history);
    for s in &corpus {
        let a = lm.cache_sentence_surprisal(&off, s);
        let b = lm.sentence_surprisal(s);
        ensure(bits_equal(&a.per_token, &b.per_token), || format!("mu=0 differs on {s:?}"))?;
    }
    Ok(format!("worst deviation {worst:.1e}; mu=0 bit-identical"))
}

fn good_turing_mass() -> Check {
    // n_r word types occurring exactly r times, r = 1..8, spread over 12
    // sentences so that the end-of-sentence count (12) lies above the
    // discounted range.
    let counts_of_counts = [60usize, 20, 10, 6, 4, 3, 2, 1];
    let mut tokens: Vec<String> = Vec::new();
    for (k, &n) in counts_of_counts.iter().enumerate() {
        for t in 0..n {
            tokens.extend(std::iter::repeat_n(format!("w{}_{t}", k + 1), k + 1));
        }
    }
    SplitMix64::new(8).shuffle(&mut tokens);
    let sentences: Vec<Vec<String>> = tokens.chunks(tokens.len().div_ceil(12)).map(<[String]>::to_vec).collect();
    ensure(sentences.len() == 12, || "expected 12 sentences".into())?;
    let lm = TrigramLm::train(&sentences, NgramConfig { min_count: 1, gt_max: 7, log_base: LogBase::Two })
        .map_err(|e| e.to_string())?;
    let n = (tokens.len() + sentences.len()) as f64;
    let expected = counts_of_counts[0] as f64 / n;
    let leftover = lm.unigram_leftover();
    ensure((leftover - expected).abs() < 1e-9, || format!("unseen mass {leftover} vs N1/N {expected}"))?;

    let v = lm.vocab().len() as u64;
    let mut rng = SplitMix64::new(9);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        // Half the contexts are observed bigrams, half arbitrary.
        let (u, w) = if i % 2 == 0 {
            let s = &sentences[rng.below(12) as usize];
            let j = rng.below(s.len() as u64 - 1) as usize;
            (lm.vocab().id(&s[j]), lm.vocab().id(&s[j + 1]))
        } else {
            (rng.below(v) as u32, rng.below(v) as u32)
        };
        let total: f64 = (1..v as u32).map(|x| lm.prob(u, w, x)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    ensure(worst < 1e-9, || format!("conditional sums off by {worst:.3e}"))?;
    Ok(format!("unseen mass {leftover:.12} = N1/N; 200 contexts sum to 1 within {worst:.1e}"))
}

const RELS: [&str; 5] = ["k1", "k2", "k4", "k7t", "k3"];

/// Verb-final tree with `n` constituents, each with an optional adjective and
/// case marker, unique forms and a postverbal auxiliary.
fn random_verb_final(n: usize, rng: &mut SplitMix64) -> DependencyTree {
    let mut rows: Vec<(String, String, Option<usize>)> = Vec::new();
    for c in 0..n {
        let adj = rng.below(2) == 0;
        let noun_at = rows.len() + usize::from(adj);
        if adj {
            rows.push((format!("adj{c}"), "nmod__adj".into(), Some(noun_at)));
        }
        rows.push((format!("n{c}"), RELS[rng.below(5) as usize].into(), None));
        if rng.below(2) == 0 {
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
    DependencyTree::new("d", format!("s{n}"), tokens).expect("verb-final trees are projective")
}

fn variant_labels(set: &VariantSet, order: &[usize]) -> Vec<String> {
    let cs = preverbal_constituents(&set.reference);
    order.iter().map(|&i| cs[i].deprel.clone()).collect()
}

fn variant_combinatorics() -> Check {
    let mut rng = SplitMix64::new(2);
    let restricted =
        AttestedGrammar::from_bigrams([("k1", "k2"), ("k2", "k1"), ("k4", "k1"), ("k1", "k4"), ("k7t", "k1")]);
    let mut restricted_emitted = 0;
    for t in 0..100 {
        let n = 2 + t % 4;
        let tree = random_verb_final(n, &mut rng);
        let set = generate_variants(&tree, None, &AttestedGrammar::permissive(), 1000, 1).map_err(|e| e.to_string())?;
        let expected: usize = (1..=n).product::<usize>() - 1;
        ensure(set.variants.len() == expected, || {
            format!("tree {t}: {} variants, expected {expected}", set.variants.len())
        })?;
        let mut reference: Vec<&str> = tree.forms();
        reference.sort_unstable();
        for v in &set.variants {
            let mut forms = set.variant_forms(v);
            forms.sort_unstable();
            ensure(forms == reference, || format!("tree {t}: token multiset changed"))?;
        }
        let filtered = generate_variants(&tree, None, &restricted, 1000, 1).map_err(|e| e.to_string())?;
        for v in &filtered.variants {
            let labels = variant_labels(&filtered, &v.order);
            ensure(restricted.allows(&labels), || format!("tree {t}: emitted {labels:?}"))?;
        }
        restricted_emitted += filtered.variants.len();
    }
    Ok(format!("100 trees at n!-1; {restricted_emitted} filtered variants re-checked"))
}

fn random_vector(rng: &mut SplitMix64) -> FeatureVector {
    let mut x = || (rng.next_f64() - 0.5) * 200.0;
    let (trigram_surp, pcfg_surp, lex_rept_surp, lstm_surp, adaptive_lstm_surp) = (x(), x(), x(), x(), x());
    FeatureVector {
        trigram_surp,
        dep_length: rng.below(60),
        pcfg_surp,
        lex_rept_surp,
        is_score: rng.below(3) as i8 - 1,
        lstm_surp,
        adaptive_lstm_surp,
    }
}

fn pairing_algebra() -> Check {
    let mut rng = SplitMix64::new(4);
    let mut total = 0;
    for table in 0..300 {
        let sets: Vec<ScoredSet> = (0..1 + rng.below(10))
            .map(|g| ScoredSet {
                group_id: format!("t{table}g{g}"),
                reference: random_vector(&mut rng),
                variants: (0..rng.below(16)).map(|_| random_vector(&mut rng)).collect(),
                tags: BTreeSet::new(),
            })
            .collect();
        let pairs = make_pairs(&sets);
        for s in &sets {
            let ones = pairs.iter().filter(|p| p.group_id == s.group_id && p.label == 1).count() as i64;
            let zeros = pairs.iter().filter(|p| p.group_id == s.group_id && p.label == 0).count() as i64;
            ensure((ones - zeros).abs() <= 1 && (ones + zeros) as usize == s.variants.len(), || {
                format!("{}: {ones} ones, {zeros} zeros", s.group_id)
            })?;
        }
        for p in &pairs {
            let f = p.flipped();
            ensure(f.label == 1 - p.label, || "label not complemented".into())?;
            ensure((0..N_FEATURES).all(|k| f.delta[k].to_bits() == (-p.delta[k]).to_bits()), || {
                "delta not negated".into()
            })?;
        }
        total += pairs.len();
    }
    Ok(format!("300 tables, {total} pairs balanced and flipped exactly"))
}

fn regression_recovery() -> Check {
    let names = ["trigram_surp", "dep_length", "is_score"];
    let beta = [1.0, -0.5, 0.3];
    let idx: Vec<usize> = names.iter().map(|c| FeatureVector::index_of(c).unwrap()).collect();
    let mut rng = SplitMix64::new(42);
    let pairs: Vec<PairInstance> = (0..10_000)
        .map(|i| {
            let mut delta = [0.0; N_FEATURES];
            let mut eta = 0.0;
            for (k, &c) in idx.iter().enumerate() {
                delta[c] = 4.0 * rng.next_f64() - 2.0;
                eta += beta[k] * delta[c];
            }
            let label = u8::from(rng.next_f64() < 1.0 / (1.0 + (-eta).exp()));
            PairInstance { delta, label, group_id: format!("g{}", i / 5), subset_tags: BTreeSet::new() }
        })
        .collect();
    let r = fit_logistic(&pairs, &FeatureSubset::from_names(&names).unwrap(), &FitConfig::default())
        .map_err(|e| e.to_string())?;
    ensure(r.max_score < 1e-6, || format!("max score {:.3e}", r.max_score))?;
    let mut found = Vec::new();
    for (name, truth) in names.iter().zip(beta) {
        let c = r.coefficient(name).ok_or("missing coefficient")?;
        ensure((c.beta - truth).abs() <= 0.05, || format!("{name}: {} vs {truth}", c.beta))?;
        ensure((c.t - c.beta / c.se).abs() <= 1e-9, || format!("{name}: t {} vs {}", c.t, c.beta / c.se))?;
        found.push(format!("{name} {:.3}", c.beta));
    }
    Ok(format!("{}; max score {:.1e}", found.join(", "), r.max_score))
}

fn mcnemar_oracle() -> Check {
    let p = mcnemar_exact_p(2, 8);
    ensure(p == 0.109375, || format!("p(2, 8) = {p}"))?;
    for b in 0..25 {
        ensure(mcnemar_exact_p(b, b) == 1.0, || format!("p({b}, {b}) != 1"))?;
    }
    let mut rng = SplitMix64::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = 45 + rng.below(11);
        let skew = 0.5 + 0.3 * (rng.next_f64() - 0.5);
        let b = (0..n).filter(|_| rng.next_f64() < skew).count() as u64;
        worst = worst.max((mcnemar_exact_p(b, n - b) - mcnemar_chi2_p(b, n - b)).abs());
    }
    ensure(worst < 0.02, || format!("worst branch gap {worst:.4}"))?;
    Ok(format!("p(2,8) = 0.109375; worst exact/chi2 gap {worst:.4} near b+c = 50"))
}

fn is_fixtures() -> Check {
    let text = include_str!("fixtures/is_examples.conllu");
    let tb = parse_treebank(text.as_bytes(), &ColumnMap::default()).map_err(|e| e.to_string())?;
    let doc = &tb.documents[0];
    let (context, reference, variant) = (&doc.sentences[0], &doc.sentences[1], &doc.sentences[2]);
    let cfg = IsConfig::default();
    let a = is_score(reference, Some(context), &cfg);
    let c = is_score(variant, Some(context), &cfg);
    ensure(a == 0 && c == -1, || format!("reference {a}, variant {c}"))?;
    ensure(doc.context_of(1) == Some(context), || "reference context is not the preceding sentence".into())?;
    Ok("Given-Given reference 0, New-Given variant -1".into())
}

/// Heads of a random projective tree over `1..=n`.
fn projective_heads(n: usize, rng: &mut SplitMix64) -> Vec<usize> {
    fn build(lo: usize, hi: usize, parent: usize, heads: &mut [usize], rng: &mut SplitMix64) {
        let r = lo + rng.below((hi - lo + 1) as u64) as usize;
        heads[r - 1] = parent;
        let mut start = lo;
        while start < r {
            let end = start + rng.below((r - start) as u64) as usize;
            build(start, end, r, heads, rng);
            start = end + 1;
        }
        let mut start = r + 1;
        while start <= hi {
            let end = start + rng.below((hi - start + 1) as u64) as usize;
            build(start, end, r, heads, rng);
            start = end + 1;
        }
    }
    let mut heads = vec![0; n];
    build(1, n, 0, &mut heads, rng);
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
    DependencyTree::new("d", "s", tokens).expect("generated heads are projective")
}

fn dependency_length_check() -> Check {
    let mut rng = SplitMix64::new(6);
    for t in 0..1000 {
        let n = 1 + rng.below(25) as usize;
        let heads = projective_heads(n, &mut rng);
        // Words strictly between each dependent and its head.
        let brute: u64 = heads
            .iter()
            .enumerate()
            .filter(|(_, &h)| h != 0)
            .map(|(i, &h)| {
                let (lo, hi) = ((i + 1).min(h), (i + 1).max(h));
                (lo + 1..hi).count() as u64
            })
            .sum();
        let got = dependency_length(&tree_from_heads(&heads));
        ensure(got == brute, || format!("tree {t} {heads:?}: {got} vs {brute}"))?;
    }
    for n in 1..=30 {
        let right: Vec<usize> = (1..=n).map(|i| if i == n { 0 } else { i + 1 }).collect();
        let left: Vec<usize> = (1..=n).map(|i| i - 1).collect();
        for heads in [right, left] {
            let d = dependency_length(&tree_from_heads(&heads));
            ensure(d == 0, || format!("chain {heads:?} scored {d}"))?;
        }
    }
    Ok("1000 random trees match the per-arc recount; chains score 0".into())
}

fn end_to_end_synthetic() -> Check {
    let lm = TrigramLm::train(&generate_lm_corpus(3000, 21), NgramConfig { min_count: 1, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let docs = generate_treebank(&SyntheticConfig { documents: 80, sentences_per_document: 5, seed: 23 });
    let permissive = AttestedGrammar::permissive();
    // Each reference becomes the lowest-surprisal ordering of its own
    // constituents.
    let documents: Vec<Document> = docs
        .into_iter()
        .map(|d| {
            let sentences = d
                .sentences
                .iter()
                .map(|tree| {
                    let all = generate_variants(tree, None, &permissive, 1000, 0).expect("cap is valid");
                    let surprisal = |t: &DependencyTree| lm.sentence_surprisal(&t.forms()).total;
                    all.variants
                        .iter()
                        .map(|v| all.variant_tree(v))
                        .chain([tree.clone()])
                        .min_by(|a, b| surprisal(a).total_cmp(&surprisal(b)))
                        .expect("the reference is a candidate")
                })
                .collect();
            Document { doc_id: d.doc_id, sentences }
        })
        .collect();

    let mut rng = SplitMix64::new(31);
    let mut noise = Vec::new();
    let mut sets = Vec::new();
    for d in &documents {
        for (k, tree) in d.sentences.iter().enumerate() {
            let set = generate_variants(tree, d.context_of(k), &permissive, 100, 13).map_err(|e| e.to_string())?;
            for vid in 0..=set.variants.len() {
                noise.push((row_key(set.sentence_id(), vid), rng.next_f64()));
            }
            sets.push(set);
        }
    }
    let noise = ExternalColumn::from_pairs(noise);
    let scorers = Scorers { trigram: Some(&lm), ..Default::default() };
    let mut rows = Vec::new();
    for set in &sets {
        rows.extend(assemble_features(set, &scorers, Some(&noise), &IsConfig::default()).map_err(|e| e.to_string())?);
    }
    let pairs = make_pairs(&sets_from_rows(&rows).map_err(|e| e.to_string())?);
    let subsets = [
        FeatureSubset::from_names(&["trigram_surp"]).unwrap(),
        FeatureSubset::from_names(&["trigram_surp", "pcfg_surp"]).unwrap(),
    ];
    let tables = cross_validate(&pairs, 10, &subsets, 13, &FitConfig::default()).map_err(|e| e.to_string())?;
    let (alone, noisy) = (tables[0].accuracy(), tables[1].accuracy());
    let (b, c) = discordant(&tables[0].predicted, &tables[1].predicted, &tables[0].gold).map_err(|e| e.to_string())?;
    let p = mcnemar(&tables[0].predicted, &tables[1].predicted, &tables[0].gold).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} pairs; trigram alone {:.2}%, with noise {:.2}%; b={b} c={c} McNemar p={p:.3}",
        pairs.len(),
        100.0 * alone,
        100.0 * noisy
    );
    ensure(alone >= 0.90, || format!("{detail}: accuracy below 90%"))?;
    ensure((alone - noisy).abs() < 0.01, || format!("{detail}: noise moved accuracy by 1% or more"))?;
    ensure(p > 0.05, || format!("{detail}: McNemar p <= 0.05"))?;
    Ok(detail)
}

const SEED: u64 = 17;

async fn call(app: &axum::Router, req: Request<Body>) -> Result<(StatusCode, Value), String> {
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
}

/// Whether option A shows the reference, recomputed from the assignment
/// rule rather than taken from the service.
fn reference_is_a(item_id: u64) -> bool {
    SplitMix64::for_item(SEED, &item_id.to_string()).next() & 1 == 0
}

async fn human_label_rule() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log_path = dir.path().join("judgments.jsonl");
    let pool_tsv = "item_id\tcontext\treference\tvariant\tmodel_prediction\n\
                    1\tc1\tx y z\tz y x\t1\n\
                    2\tc2\tp q r\tq p r\t1\n\
                    3\tc3\tu v w\tv u w\t0\n";
    let pool = parse_pool(pool_tsv).map_err(|e| e.to_string())?;
    let log = JudgmentLog::open(&log_path).map_err(|e| e.to_string())?;
    let app = router(AppState::new(pool, SEED, log), None);
    let for_reference = [7, 6, 12];
    for p in 0..12 {
        for (k, item) in [1u64, 2, 3].into_iter().enumerate() {
            let pick_reference = p < for_reference[k];
            let choice = if pick_reference == reference_is_a(item) { "A" } else { "B" };
            let body = json!({"participant": format!("p{p}"), "item_id": item, "choice": choice});
            let req = Request::post("/api/judgments")
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .map_err(|e| e.to_string())?;
            let (status, _) = call(&app, req).await?;
            ensure(status == StatusCode::OK, || format!("post returned {status}"))?;
        }
    }
    let (_, live) = call(&app, Request::get("/api/results").body(Body::empty()).map_err(|e| e.to_string())?).await?;

    // Offline: latest choice per (participant, item) straight from the raw log.
    let raw = std::fs::read_to_string(&log_path).map_err(|e| e.to_string())?;
    let mut latest: HashMap<(String, u64), String> = HashMap::new();
    for line in raw.lines() {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        latest.insert(
            (v["participant"].as_str().unwrap_or_default().to_string(), v["item_id"].as_u64().unwrap_or_default()),
            v["choice"].as_str().unwrap_or_default().to_string(),
        );
    }
    let mut tally: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for ((_, item), choice) in &latest {
        let e = tally.entry(*item).or_default();
        e.0 += 1;
        e.1 += u64::from((choice == "A") == reference_is_a(*item));
    }
    let items = live["items"].as_array().ok_or("results lack items")?;
    let mut labels = Vec::new();
    for item in items {
        let id = item["item_id"].as_u64().ok_or("item without id")?;
        let (votes, for_ref) = tally[&id];
        let offline = u64::from(2 * for_ref > votes);
        ensure(item["votes"] == json!(votes) && item["votes_reference"] == json!(for_ref), || {
            format!("item {id}: live {item} vs offline {votes}/{for_ref}")
        })?;
        ensure(item["human_label"] == json!(offline), || {
            format!("item {id}: live {} vs offline {offline}", item["human_label"])
        })?;
        labels.push(offline);
    }
    ensure(labels == [1, 0, 1], || format!("labels {labels:?}, expected 7/12 -> 1, 6/12 -> 0, 12/12 -> 1"))?;
    Ok("7/12 -> 1, 6/12 -> 0; offline tally equals the live endpoint".into())
}

fn main() {
    let secs = Duration::from_secs;
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let results = [
        criterion("adaptive identity", Some(secs(5)), adaptive_identity),
        criterion("gradient fidelity", Some(secs(30)), gradient_fidelity),
        criterion("weight-restore purity", None, weight_restore_purity),
        criterion("cache oracle", None, cache_oracle),
        criterion("Good-Turing mass", None, good_turing_mass),
        criterion("variant combinatorics", None, variant_combinatorics),
        criterion("pairing algebra", None, pairing_algebra),
        criterion("regression recovery", Some(secs(10)), regression_recovery),
        criterion("McNemar oracle", None, mcnemar_oracle),
        criterion("IS scheme fidelity", None, is_fixtures),
        criterion("dependency length", None, dependency_length_check),
        criterion("end-to-end synthetic experiment", Some(secs(120)), end_to_end_synthetic),
        criterion("human-label rule", None, || runtime.block_on(human_label_rule())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
