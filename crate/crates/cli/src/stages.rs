//! One function per pipeline stage. Each reads its inputs from files and
//! writes its outputs to files, so subcommands and the pipeline share them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use orderlab_core::analysis::{
    argument_frame, case_density_by, classify_verb, correlation_matrix, correlation_tsv, subset_report, subset_tags,
    ArgumentFrame, SubsetReport, VerbClassMap,
};
use orderlab_core::corpus::{parse_treebank, write_conll, ColumnMap, DependencyTree, Document, Treebank};
use orderlab_core::features::{
    assemble_features, read_feature_table, write_feature_table, ExternalColumn, FeatureRow, IsConfig, Scorers,
    FEATURE_NAMES,
};
use orderlab_core::lstm::{
    corpus_sha256, train_lstm as fit_lstm, training_manifest, AdaptationConfig, LstmLm, LstmTrainConfig,
};
use orderlab_core::ngram::{train_trigram, LogBase, NgramConfig, TrigramLm};
use orderlab_core::ranker::{
    cross_validate, discordant, fit_logistic, likelihood_ratio_test, make_pairs, mcnemar_from_counts, sets_from_rows,
    FeatureSubset, FitConfig, PairInstance, PredictionTable, RegressionReport, ScoredSet,
};
use orderlab_core::rng::SplitMix64;
use orderlab_core::synthetic::{generate_lm_corpus, generate_treebank, SyntheticConfig};
use orderlab_core::variantgen::{
    build_attested_grammar, generate_variants, parse_variant_records, set_from_records, VariantRecord, VariantSet,
};
use orderlab_evalsvc::{write_pool, StimulusItem};
use rayon::prelude::*;

use crate::error::{CliError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_treebank(path: &Path, columns: &ColumnMap) -> Result<Treebank> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    parse_treebank(BufReader::new(file), columns).map_err(|e| CliError::input(path, e.to_string()))
}

/// Whitespace-tokenised sentences, one per non-blank line.
pub fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect())
}

pub fn read_ngram(path: &Path) -> Result<TrigramLm> {
    TrigramLm::from_text(&read_text(path)?).map_err(|e| CliError::input(path, e.to_string()))
}

pub fn read_lstm(path: &Path) -> Result<LstmLm> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    LstmLm::read_from(&mut BufReader::new(file)).map_err(|e| CliError::input(path, e.to_string()))
}

/// Writes a toy treebank and a language-model corpus in the same style.
pub fn synth(cfg: &SyntheticConfig, lm_sentences: usize, treebank_out: &Path, corpus_out: &Path) -> Result<()> {
    write_text(treebank_out, &write_conll(&generate_treebank(cfg)))?;
    let corpus: String = generate_lm_corpus(lm_sentences, cfg.seed).iter().map(|s| s.join(" ") + "\n").collect();
    write_text(corpus_out, &corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: usize,
}

/// Normalised CoNLL-U of the accepted trees plus a per-sentence report.
pub fn ingest(treebank: &Path, columns: &ColumnMap, conll_out: &Path, report_out: &Path) -> Result<IngestSummary> {
    let tb = read_treebank(treebank, columns)?;
    write_text(conll_out, &write_conll(&tb.documents))?;
    write_text(report_out, &format!("sentence_id\tstatus\treason\n{}", tb.report.to_tsv()))?;
    Ok(IngestSummary { accepted: tb.report.accepted(), rejected: tb.report.rejected() })
}

pub fn train_ngram(corpus: &Path, config: NgramConfig, out: &Path) -> Result<TrigramLm> {
    let sentences = read_sentences(corpus)?;
    let lm = train_trigram(&sentences, config).map_err(|e| CliError::input(corpus, e.to_string()))?;
    write_text(out, &lm.to_text())?;
    Ok(lm)
}

pub fn train_lstm(
    corpus: &Path,
    valid: Option<&Path>,
    config: &LstmTrainConfig,
    model_out: &Path,
    manifest_out: &Path,
) -> Result<LstmLm> {
    let sentences = read_sentences(corpus)?;
    let valid = valid.map(read_sentences).transpose()?;
    let lm = fit_lstm(&sentences, valid.as_deref(), config)?;
    let mut bytes = Vec::new();
    lm.write_to(&mut bytes)?;
    if let Some(dir) = model_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    fs::write(model_out, bytes).map_err(CliError::io(model_out))?;
    write_text(manifest_out, &training_manifest(config, &corpus_sha256(&sentences), lm.history()))?;
    Ok(lm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VariantSummary {
    pub sentences: usize,
    pub variants: usize,
    pub filtered_out: usize,
    pub duplicates_dropped: usize,
}

/// Variants of every sentence; the bigram filter is learned from `grammar`
/// (the treebank itself when absent). Each sentence's context is the
/// previous sentence of its document.
pub fn gen_variants(
    treebank: &Path,
    grammar: Option<&Path>,
    cap: usize,
    seed: u64,
    out: &Path,
) -> Result<VariantSummary> {
    let tb = read_treebank(treebank, &ColumnMap::default())?;
    let grammar = match grammar {
        Some(g) => build_attested_grammar(&read_treebank(g, &ColumnMap::default())?.documents)?,
        None => build_attested_grammar(&tb.documents)?,
    };
    let jobs: Vec<(&DependencyTree, Option<&DependencyTree>)> = tb
        .documents
        .iter()
        .flat_map(|d| d.sentences.iter().enumerate().map(move |(k, t)| (t, d.context_of(k))))
        .collect();
    let sets = jobs
        .par_iter()
        .map(|(t, c)| generate_variants(t, *c, &grammar, cap, seed))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut summary = VariantSummary::default();
    let mut text = String::new();
    for s in &sets {
        summary.sentences += 1;
        summary.variants += s.variants.len();
        summary.filtered_out += s.filtered_out;
        summary.duplicates_dropped += s.duplicates_dropped;
        text.push_str(&s.to_records());
    }
    write_text(out, &text)?;
    Ok(summary)
}

/// Rebuilds the variant sets listed in a record file against the treebank.
pub fn load_variant_sets(documents: &[Document], records_path: &Path, seed: u64) -> Result<Vec<VariantSet>> {
    let records = parse_variant_records(&read_text(records_path)?)?;
    let mut by_sentence: BTreeMap<(&str, &str), Vec<&VariantRecord>> = BTreeMap::new();
    for r in &records {
        by_sentence.entry((r.doc_id.as_str(), r.sentence_id.as_str())).or_default().push(r);
    }
    let mut sets = Vec::new();
    for doc in documents {
        for (k, tree) in doc.sentences.iter().enumerate() {
            if let Some(rs) = by_sentence.remove(&(doc.doc_id.as_str(), tree.sentence_id.as_str())) {
                sets.push(set_from_records(tree, doc.context_of(k), &rs, seed)?);
            }
        }
    }
    if let Some(((doc, sid), _)) = by_sentence.into_iter().next() {
        return Err(CliError::input(records_path, format!("sentence {doc}/{sid} is not in the treebank")));
    }
    Ok(sets)
}

pub struct FeatureInputs<'a> {
    pub treebank: &'a Path,
    pub variants: &'a Path,
    pub ngram: Option<&'a Path>,
    pub lstm: Option<&'a Path>,
    pub external: Option<&'a Path>,
    pub cache_weight: f64,
    pub adaptation: AdaptationConfig,
    pub is_config: IsConfig,
    pub seed: u64,
}

pub fn features(inputs: &FeatureInputs<'_>, out: &Path) -> Result<usize> {
    let tb = read_treebank(inputs.treebank, &ColumnMap::default())?;
    let sets = load_variant_sets(&tb.documents, inputs.variants, inputs.seed)?;
    let ngram = inputs.ngram.map(read_ngram).transpose()?;
    let lstm = inputs.lstm.map(read_lstm).transpose()?;
    let external = match inputs.external {
        Some(p) => {
            let file = fs::File::open(p).map_err(CliError::io(p))?;
            Some(ExternalColumn::read(BufReader::new(file)).map_err(|e| CliError::input(p, e.to_string()))?)
        }
        None => None,
    };
    let scorers = Scorers {
        trigram: ngram.as_ref(),
        lstm: lstm.as_ref(),
        cache_weight: inputs.cache_weight,
        adaptation: inputs.adaptation,
    };
    let rows: Vec<Vec<FeatureRow>> = sets
        .par_iter()
        .map(|s| assemble_features(s, &scorers, external.as_ref(), &inputs.is_config))
        .collect::<std::result::Result<_, _>>()?;
    let rows: Vec<FeatureRow> = rows.into_iter().flatten().collect();
    write_text(out, &write_feature_table(&rows))?;
    Ok(rows.len())
}

/// Pairs with subset tags taken from each reference tree, and the variant id
/// behind every pair.
pub fn tagged_pairs(
    rows: &[FeatureRow],
    tb: &Treebank,
    classes: &VerbClassMap,
) -> Result<(Vec<PairInstance>, Vec<usize>)> {
    let trees: BTreeMap<String, &DependencyTree> =
        tb.trees().map(|t| (format!("{}/{}", t.doc_id, t.sentence_id), t)).collect();
    let mut sets: Vec<ScoredSet> = sets_from_rows(rows)?;
    for s in &mut sets {
        if let Some(t) = trees.get(&s.group_id) {
            s.tags = subset_tags(t, classes);
        }
    }
    let mut ids: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.variant_id > 0) {
        ids.entry((r.doc_id.as_str(), r.sentence_id.as_str())).or_default().push(r.variant_id);
    }
    let variant_ids: Vec<usize> = ids
        .into_values()
        .flat_map(|mut v| {
            v.sort_unstable();
            v
        })
        .collect();
    let pairs = make_pairs(&sets);
    debug_assert_eq!(pairs.len(), variant_ids.len());
    Ok((pairs, variant_ids))
}

pub fn load_classes(path: Option<&Path>) -> Result<VerbClassMap> {
    match path {
        Some(p) => VerbClassMap::parse(&read_text(p)?).map_err(|e| CliError::input(p, e.to_string())),
        None => Ok(VerbClassMap::default()),
    }
}

pub struct RankInputs<'a> {
    pub features: &'a Path,
    pub treebank: &'a Path,
    pub verb_classes: Option<&'a Path>,
    pub subsets: &'a [FeatureSubset],
    pub folds: usize,
    pub seed: u64,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSummary {
    pub pairs: usize,
    /// `(subset label, accuracy in percent)` in input order.
    pub accuracy: Vec<(String, f64)>,
}

pub const RANK_OUTPUTS: [&str; 5] =
    ["regression.txt", "regression.tsv", "predictions.tsv", "accuracy.tsv", "comparisons.tsv"];

/// Full-data regressions and cross-validated predictions for every subset;
/// the first subset is the baseline for McNemar and likelihood-ratio
/// comparisons.
pub fn rank(inputs: &RankInputs<'_>, out_dir: &Path) -> Result<RankSummary> {
    if inputs.subsets.is_empty() {
        return Err(CliError::Config("rank needs at least one feature subset".into()));
    }
    let rows = read_feature_table(&read_text(inputs.features)?)
        .map_err(|e| CliError::input(inputs.features, e.to_string()))?;
    let tb = read_treebank(inputs.treebank, &ColumnMap::default())?;
    let (pairs, variant_ids) = tagged_pairs(&rows, &tb, &load_classes(inputs.verb_classes)?)?;
    let reports: Vec<RegressionReport> =
        inputs.subsets.iter().map(|s| fit_logistic(&pairs, s, &inputs.fit)).collect::<std::result::Result<_, _>>()?;
    let tables = cross_validate(&pairs, inputs.folds, inputs.subsets, inputs.seed, &inputs.fit)?;

    let mut txt = String::new();
    let mut tsv = String::from("subset\tpredictor\tbeta\tsigma\tt\n");
    for r in &reports {
        let _ = writeln!(
            txt,
            "== {} ==\npairs {}  log-likelihood {:.4}  iterations {}  converged {}  separated {}",
            r.subset.label(),
            r.n,
            r.log_likelihood,
            r.iterations,
            r.converged,
            r.separated
        );
        if !r.uninformative.is_empty() {
            let _ = writeln!(txt, "uninformative (all-zero) columns: {}", r.uninformative.join(", "));
        }
        txt.push_str(&r.render());
        txt.push('\n');
        for c in &r.coefficients {
            let _ = writeln!(tsv, "{}\t{}\t{:?}\t{:?}\t{:?}", r.subset.label(), c.name, c.beta, c.se, c.t);
        }
    }
    write_text(&out_dir.join(RANK_OUTPUTS[0]), &txt)?;
    write_text(&out_dir.join(RANK_OUTPUTS[1]), &tsv)?;
    write_text(&out_dir.join(RANK_OUTPUTS[2]), &predictions_tsv(&pairs, &variant_ids, &tables))?;

    let mut acc = String::from("subset\tpairs\tcorrect\taccuracy\n");
    let mut accuracy = Vec::new();
    for t in &tables {
        let pct = 100.0 * t.accuracy();
        let _ = writeln!(acc, "{}\t{}\t{}\t{pct:.4}", t.subset.label(), t.gold.len(), t.correct());
        accuracy.push((t.subset.label(), pct));
    }
    write_text(&out_dir.join(RANK_OUTPUTS[3]), &acc)?;

    let mut cmp = String::from("baseline\taugmented\tb\tc\tmcnemar_p\tlr_chi2\tlr_p\n");
    for (k, t) in tables.iter().enumerate().skip(1) {
        let (b, c) = discordant(&t.predicted, &tables[0].predicted, &t.gold)?;
        let lr = likelihood_ratio_test(&reports[k], &reports[0])
            .map(|(chi2, p)| (format!("{chi2:.6}"), format_p(p)))
            .unwrap_or_else(|_| ("NA".into(), "NA".into()));
        let _ = writeln!(
            cmp,
            "{}\t{}\t{b}\t{c}\t{}\t{}\t{}",
            tables[0].subset.label(),
            t.subset.label(),
            format_p(mcnemar_from_counts(b, c)),
            lr.0,
            lr.1
        );
    }
    write_text(&out_dir.join(RANK_OUTPUTS[4]), &cmp)?;
    Ok(RankSummary { pairs: pairs.len(), accuracy })
}

/// Fixed notation for ordinary p-values, scientific below 1e-4.
fn format_p(p: f64) -> String {
    if p >= 1e-4 {
        format!("{p:.6}")
    } else {
        format!("{p:.3e}")
    }
}

fn predictions_tsv(pairs: &[PairInstance], variant_ids: &[usize], tables: &[PredictionTable]) -> String {
    let mut out = String::from("pair\tgroup_id\tvariant_id\tlabel\tfold\ttags");
    for t in tables {
        let label = t.subset.label();
        let _ = write!(out, "\tpred:{label}\tprob:{label}");
    }
    out.push('\n');
    for (i, p) in pairs.iter().enumerate() {
        let tags: Vec<&str> = p.subset_tags.iter().map(String::as_str).collect();
        let _ = write!(
            out,
            "{i}\t{}\t{}\t{}\t{}\t{}",
            p.group_id,
            variant_ids[i],
            p.label,
            tables[0].fold[i],
            tags.join(",")
        );
        for t in tables {
            let _ = write!(out, "\t{}\t{:?}", t.predicted[i], t.probability[i]);
        }
        out.push('\n');
    }
    out
}

/// Parsed prediction file: per-pair identity and one table per subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub group_ids: Vec<String>,
    pub variant_ids: Vec<usize>,
    pub tags: Vec<BTreeSet<String>>,
    pub tables: Vec<PredictionTable>,
}

pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> =
        lines.next().ok_or_else(|| CliError::input(path, "empty prediction file"))?.split('\t').collect();
    if header.len() < 8 || header[..6] != ["pair", "group_id", "variant_id", "label", "fold", "tags"] {
        return Err(CliError::input(path, "unexpected prediction header"));
    }
    let mut subsets = Vec::new();
    for h in header[6..].iter().step_by(2) {
        let label = h.strip_prefix("pred:").ok_or_else(|| CliError::input(path, format!("bad column {h}")))?;
        subsets.push(FeatureSubset::parse(label)?);
    }
    let mut p = Predictions { group_ids: Vec::new(), variant_ids: Vec::new(), tags: Vec::new(), tables: Vec::new() };
    let mut gold = Vec::new();
    let mut fold = Vec::new();
    let mut predicted = vec![Vec::new(); subsets.len()];
    let mut probability = vec![Vec::new(); subsets.len()];
    for (i, line) in lines.enumerate() {
        let bad = || CliError::input(path, format!("line {}: malformed prediction row", i + 2));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != header.len() {
            return Err(bad());
        }
        p.group_ids.push(f[1].to_string());
        p.variant_ids.push(f[2].parse().map_err(|_| bad())?);
        gold.push(f[3].parse().map_err(|_| bad())?);
        fold.push(f[4].parse().map_err(|_| bad())?);
        p.tags.push(f[5].split(',').filter(|s| !s.is_empty()).map(str::to_string).collect());
        for k in 0..subsets.len() {
            predicted[k].push(f[6 + 2 * k].parse().map_err(|_| bad())?);
            probability[k].push(f[7 + 2 * k].parse().map_err(|_| bad())?);
        }
    }
    p.tables = subsets
        .into_iter()
        .zip(predicted.into_iter().zip(probability))
        .map(|(subset, (predicted, probability))| PredictionTable {
            subset,
            predicted,
            probability,
            gold: gold.clone(),
            fold: fold.clone(),
        })
        .collect();
    Ok(p)
}

pub struct AnalyzeInputs<'a> {
    pub features: &'a Path,
    pub predictions: &'a Path,
    pub treebank: &'a Path,
    pub verb_classes: Option<&'a Path>,
    pub families: &'a [String],
}

pub fn analyze_outputs(families: &[String]) -> Vec<String> {
    let mut out: Vec<String> =
        families.iter().flat_map(|f| [format!("subsets_{f}.txt"), format!("subsets_{f}.tsv")]).collect();
    out.push("correlations.tsv".into());
    out.push("case_density.tsv".into());
    out
}

/// Per-subset accuracy comparisons of every subset against the first,
/// predictor correlations over pair deltas and case density per verb class.
pub fn analyze(inputs: &AnalyzeInputs<'_>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_feature_table(&read_text(inputs.features)?)
        .map_err(|e| CliError::input(inputs.features, e.to_string()))?;
    let tb = read_treebank(inputs.treebank, &ColumnMap::default())?;
    let classes = load_classes(inputs.verb_classes)?;
    let (mut pairs, _) = tagged_pairs(&rows, &tb, &classes)?;
    let preds = read_predictions(inputs.predictions)?;
    if preds.group_ids.len() != pairs.len() || preds.group_ids.iter().zip(&pairs).any(|(g, p)| *g != p.group_id) {
        return Err(CliError::input(inputs.predictions, "predictions do not match the feature table"));
    }
    for (p, tags) in pairs.iter_mut().zip(&preds.tags) {
        p.subset_tags = tags.clone();
    }
    let mut written = Vec::new();
    for family in inputs.families {
        let labels: Vec<String> = match family.as_str() {
            "class" => classes.classes().into_iter().map(str::to_string).collect(),
            "frame" => [ArgumentFrame::SDo, ArgumentFrame::SIo, ArgumentFrame::SIoDo, ArgumentFrame::None]
                .iter()
                .map(|f| f.as_str().to_string())
                .collect(),
            "conjunct" => vec!["yes".into(), "no".into()],
            _ => Vec::new(),
        };
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        let empty = SubsetReport { family: family.clone(), rows: Vec::new() }.to_tsv();
        let mut tsv = format!("baseline\taugmented\t{empty}");
        let mut txt = String::new();
        let baseline = preds.tables[0].subset.label();
        for augmented in preds.tables.iter().skip(1) {
            let report = subset_report(&preds.tables[0], augmented, &pairs, family, &labels)?;
            let _ = writeln!(txt, "== {baseline} vs {} ==", augmented.subset.label());
            txt.push_str(&report.render());
            txt.push('\n');
            for line in report.to_tsv().lines().skip(1) {
                let _ = writeln!(tsv, "{baseline}\t{}\t{line}", augmented.subset.label());
            }
        }
        for (name, body) in [(format!("subsets_{family}.txt"), txt), (format!("subsets_{family}.tsv"), tsv)] {
            let path = out_dir.join(name);
            write_text(&path, &body)?;
            written.push(path);
        }
    }

    let columns: Vec<Vec<f64>> = (0..FEATURE_NAMES.len()).map(|k| pairs.iter().map(|p| p.delta[k]).collect()).collect();
    let path = out_dir.join("correlations.tsv");
    write_text(&path, &correlation_tsv(&FEATURE_NAMES, &correlation_matrix(&columns)))?;
    written.push(path);

    let by_class = case_density_by(tb.trees().map(|t| (classify_verb(t, &classes), t)));
    let by_frame = case_density_by(tb.trees().map(|t| (argument_frame(t).as_str(), t)));
    let mut density = String::from("family\tlabel\tmean_case_markers\tsentences\n");
    for (family, table) in [("class", by_class), ("frame", by_frame)] {
        for (label, (mean, n)) in table {
            let _ = writeln!(density, "{family}\t{label}\t{mean:.6}\t{n}");
        }
    }
    let path = out_dir.join("case_density.tsv");
    write_text(&path, &density)?;
    written.push(path);
    Ok(written)
}

pub struct StimuliInputs<'a> {
    pub treebank: &'a Path,
    pub variants: &'a Path,
    pub predictions: &'a Path,
    /// Prediction column used as the model's choice; the last when absent.
    pub subset: Option<&'a str>,
    pub count: usize,
    pub seed: u64,
}

/// A seeded sample of reference/variant pairs with their context and the
/// model's cross-validated choice, in the pool format of the evaluation
/// service.
pub fn export_stimuli(inputs: &StimuliInputs<'_>, out: &Path) -> Result<usize> {
    let tb = read_treebank(inputs.treebank, &ColumnMap::default())?;
    let sets = load_variant_sets(&tb.documents, inputs.variants, inputs.seed)?;
    let by_group: BTreeMap<String, &VariantSet> =
        sets.iter().map(|s| (format!("{}/{}", s.doc_id(), s.sentence_id()), s)).collect();
    let preds = read_predictions(inputs.predictions)?;
    let table = match inputs.subset {
        Some(label) => {
            let want = FeatureSubset::parse(label)?;
            preds
                .tables
                .iter()
                .find(|t| t.subset == want)
                .ok_or_else(|| CliError::input(inputs.predictions, format!("no predictions for subset {label}")))?
        }
        None => preds.tables.last().ok_or_else(|| CliError::input(inputs.predictions, "no prediction columns"))?,
    };
    let n = preds.group_ids.len();
    let k = inputs.count.min(n);
    let mut chosen = SplitMix64::for_item(inputs.seed, "stimuli").sample_indices(n, k);
    chosen.sort_unstable();
    let mut items = Vec::with_capacity(k);
    for (item, &i) in chosen.iter().enumerate() {
        let set = by_group
            .get(&preds.group_ids[i])
            .ok_or_else(|| CliError::input(inputs.variants, format!("no variants for {}", preds.group_ids[i])))?;
        let variant = set.variants.iter().find(|v| v.id == preds.variant_ids[i]).ok_or_else(|| {
            CliError::input(inputs.variants, format!("{} lacks variant {}", preds.group_ids[i], preds.variant_ids[i]))
        })?;
        items.push(StimulusItem {
            item_id: item as u64 + 1,
            context: set.context.as_ref().map(|c| c.forms().join(" ")).unwrap_or_default(),
            reference: set.reference.forms().join(" "),
            variant: set.variant_forms(variant).join(" "),
            // The model picks the reference when it gets the pair right.
            model_chose_reference: table.predicted[i] == table.gold[i],
        });
    }
    write_text(out, &write_pool(&items))?;
    Ok(items.len())
}

pub fn parse_log_base(s: &str) -> Result<LogBase> {
    LogBase::parse(s).ok_or_else(|| CliError::Config(format!("log base must be 2 or e, got {s:?}")))
}
