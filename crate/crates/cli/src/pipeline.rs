//! Full pipeline with per-stage memoization. A stage is skipped when the
//! digest of its name, parameters and input files matches the one recorded
//! by its last successful run and its recorded outputs are intact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use orderlab_core::corpus::ColumnMap;
use orderlab_core::features::IsConfig;
use orderlab_core::lstm::{AdaptationConfig, LstmDims, LstmTrainConfig};
use orderlab_core::ngram::{LogBase, NgramConfig};
use orderlab_core::ranker::{FeatureSubset, FitConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::stages::{self, AnalyzeInputs, FeatureInputs, RankInputs, StimuliInputs};

const CACHE_DIR: &str = ".stages";
pub const MANIFEST: &str = "manifest.toml";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(CliError::io(path))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(CliError::io(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub key: String,
    /// Output file name (relative to the run directory) to digest.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub log_base: String,
    pub config_sha256: String,
    /// Digest of everything above plus inputs and stage keys and outputs;
    /// stage status and timings are left out.
    pub identity: String,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Re-run every stage regardless of the cache.
    pub force: bool,
    pub seed: Option<u64>,
    pub log_base: Option<LogBase>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    outputs: BTreeMap<String, String>,
}

struct Runner<'a> {
    out: &'a Path,
    force: bool,
    inputs: BTreeMap<String, String>,
    records: Vec<StageRecord>,
    timings: BTreeMap<String, f64>,
    progress: &'a mut dyn FnMut(&str),
}

impl Runner<'_> {
    fn stage(
        &mut self,
        name: &str,
        inputs: &[(&str, &Path)],
        params: String,
        outputs: &[String],
        action: impl FnOnce() -> Result<()>,
    ) -> Result<()> {
        let wrap = |e: CliError| CliError::Stage { stage: name.to_string(), source: Box::new(e) };
        let mut key = Sha256::new();
        key.update(format!("orderlab {}\nstage {name}\nparams {params}\n", env!("CARGO_PKG_VERSION")));
        for (role, path) in inputs {
            let digest = sha256_file(path).map_err(wrap)?;
            key.update(format!("input {role} {digest}\n"));
            if !path.starts_with(self.out) {
                self.inputs.insert(format!("{name}.{role}"), digest);
            }
        }
        let key = format!("{:x}", key.finalize());
        let entry_path = self.out.join(CACHE_DIR).join(format!("{name}.toml"));

        if !self.force {
            if let Some(outputs) = self.cached_outputs(&entry_path, &key, outputs) {
                (self.progress)(&format!("{name}: cached"));
                self.records.push(StageRecord { name: name.into(), status: StageStatus::Cached, key, outputs });
                return Ok(());
            }
        }
        // A failed run must not leave a stale entry that would mark it cached.
        let _ = fs::remove_file(&entry_path);
        let start = Instant::now();
        action().map_err(wrap)?;
        let secs = start.elapsed().as_secs_f64();
        let mut digests = BTreeMap::new();
        for o in outputs {
            digests.insert(o.clone(), sha256_file(&self.out.join(o)).map_err(wrap)?);
        }
        let entry = CacheEntry { key: key.clone(), outputs: digests.clone() };
        stages::write_text(&entry_path, &toml::to_string(&entry).expect("cache entries serialize")).map_err(wrap)?;
        (self.progress)(&format!("{name}: ran in {secs:.2} s"));
        self.timings.insert(name.into(), secs);
        self.records.push(StageRecord { name: name.into(), status: StageStatus::Ran, key, outputs: digests });
        Ok(())
    }

    fn cached_outputs(&self, entry_path: &Path, key: &str, outputs: &[String]) -> Option<BTreeMap<String, String>> {
        let entry: CacheEntry = toml::from_str(&fs::read_to_string(entry_path).ok()?).ok()?;
        if entry.key != key || entry.outputs.len() != outputs.len() {
            return None;
        }
        for o in outputs {
            if sha256_file(&self.out.join(o)).ok()? != *entry.outputs.get(o)? {
                return None;
            }
        }
        Some(entry.outputs)
    }
}

/// Stage names in execution order.
pub const STAGES: [&str; 8] =
    ["ingest", "train-ngram", "train-lstm", "gen-variants", "features", "rank", "analyze", "export-stimuli"];

pub fn run_pipeline(
    cfg: &PipelineConfig,
    config_sha256: &str,
    opts: RunOptions,
    progress: &mut dyn FnMut(&str),
) -> Result<RunManifest> {
    let out = cfg.run.output.as_path();
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    let seed = opts.seed.unwrap_or(cfg.run.seed);
    let log_base = match opts.log_base {
        Some(b) => b,
        None => stages::parse_log_base(&cfg.run.log_base)?,
    };
    let subsets: Vec<FeatureSubset> = cfg
        .rank
        .subsets
        .iter()
        .map(|s| FeatureSubset::parse(s))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let p = |name: &str| -> PathBuf { out.join(name) };
    let names = |xs: &[&str]| -> Vec<String> { xs.iter().map(|s| s.to_string()).collect() };
    let mut runner = Runner {
        out,
        force: opts.force,
        inputs: BTreeMap::new(),
        records: Vec::new(),
        timings: BTreeMap::new(),
        progress,
    };

    let columns: ColumnMap = cfg.ingest.columns.map(Into::into).unwrap_or_default();
    let (treebank, report) = (p("treebank.conllu"), p("ingest_report.tsv"));
    runner.stage(
        "ingest",
        &[("treebank", &cfg.ingest.treebank)],
        format!("{columns:?}"),
        &names(&["treebank.conllu", "ingest_report.tsv"]),
        || stages::ingest(&cfg.ingest.treebank, &columns, &treebank, &report).map(drop),
    )?;

    let ngram_path = p("ngram.lm");
    let mut cache_weight = 0.0;
    if let Some(n) = &cfg.ngram {
        cache_weight = n.cache_weight;
        let config = NgramConfig { min_count: n.min_count, log_base, ..Default::default() };
        runner.stage("train-ngram", &[("corpus", &n.corpus)], format!("{config:?}"), &names(&["ngram.lm"]), || {
            stages::train_ngram(&n.corpus, config, &ngram_path).map(drop)
        })?;
    }

    let (lstm_path, lstm_manifest) = (p("lstm.bin"), p("lstm_manifest.tsv"));
    let mut adaptation = AdaptationConfig::default();
    if let Some(l) = &cfg.lstm {
        adaptation = AdaptationConfig { learning_rate: l.adapt_lr, grad_clip_norm: l.adapt_clip };
        let config = LstmTrainConfig {
            dims: LstmDims { d_emb: l.d_emb, d_hidden: l.d_hidden, n_layers: l.layers },
            epochs: l.epochs,
            base_lr: l.base_lr,
            grad_clip_norm: l.grad_clip,
            lr_decay: l.lr_decay,
            min_count: l.min_count,
            seed,
            log_base,
        };
        let mut inputs: Vec<(&str, &Path)> = vec![("corpus", &l.corpus)];
        if let Some(v) = &l.valid {
            inputs.push(("valid", v));
        }
        runner.stage(
            "train-lstm",
            &inputs,
            format!("{config:?}"),
            &names(&["lstm.bin", "lstm_manifest.tsv"]),
            || stages::train_lstm(&l.corpus, l.valid.as_deref(), &config, &lstm_path, &lstm_manifest).map(drop),
        )?;
    }

    let variants = p("variants.tsv");
    let mut inputs: Vec<(&str, &Path)> = vec![("treebank", &treebank)];
    if let Some(g) = &cfg.variants.grammar {
        inputs.push(("grammar", g));
    }
    runner.stage(
        "gen-variants",
        &inputs,
        format!("cap={} seed={seed}", cfg.variants.cap),
        &names(&["variants.tsv"]),
        || {
            stages::gen_variants(&treebank, cfg.variants.grammar.as_deref(), cfg.variants.cap, seed, &variants)
                .map(drop)
        },
    )?;

    let features = p("features.tsv");
    let is_config = IsConfig::default();
    let feature_inputs = FeatureInputs {
        treebank: &treebank,
        variants: &variants,
        ngram: cfg.ngram.as_ref().map(|_| ngram_path.as_path()),
        lstm: cfg.lstm.as_ref().map(|_| lstm_path.as_path()),
        external: cfg.features.external.as_deref(),
        cache_weight,
        adaptation,
        is_config: is_config.clone(),
        seed,
    };
    let mut inputs: Vec<(&str, &Path)> = vec![("treebank", &treebank), ("variants", &variants)];
    for (role, path) in
        [("ngram", feature_inputs.ngram), ("lstm", feature_inputs.lstm), ("external", feature_inputs.external)]
    {
        if let Some(path) = path {
            inputs.push((role, path));
        }
    }
    runner.stage(
        "features",
        &inputs,
        format!("cache_weight={cache_weight:?} adaptation={adaptation:?} is={is_config:?} seed={seed}"),
        &names(&["features.tsv"]),
        || stages::features(&feature_inputs, &features).map(drop),
    )?;

    let fit = FitConfig { standardize: cfg.rank.standardize, ..Default::default() };
    let classes = cfg.analyze.verb_classes.as_deref();
    let rank_inputs = RankInputs {
        features: &features,
        treebank: &treebank,
        verb_classes: classes,
        subsets: &subsets,
        folds: cfg.rank.folds,
        seed,
        fit,
    };
    let mut inputs: Vec<(&str, &Path)> = vec![("features", &features), ("treebank", &treebank)];
    if let Some(c) = classes {
        inputs.push(("verb_classes", c));
    }
    runner.stage(
        "rank",
        &inputs,
        format!("subsets={:?} folds={} seed={seed} fit={fit:?}", subsets, cfg.rank.folds),
        &names(&stages::RANK_OUTPUTS),
        || stages::rank(&rank_inputs, out).map(drop),
    )?;

    let predictions = p("predictions.tsv");
    let analyze_inputs = AnalyzeInputs {
        features: &features,
        predictions: &predictions,
        treebank: &treebank,
        verb_classes: classes,
        families: &cfg.analyze.families,
    };
    inputs.push(("predictions", &predictions));
    runner.stage(
        "analyze",
        &inputs,
        format!("families={:?}", cfg.analyze.families),
        &stages::analyze_outputs(&cfg.analyze.families),
        || stages::analyze(&analyze_inputs, out).map(drop),
    )?;

    if let Some(s) = &cfg.stimuli {
        let stimuli = p("stimuli.tsv");
        let stimuli_inputs = StimuliInputs {
            treebank: &treebank,
            variants: &variants,
            predictions: &predictions,
            subset: s.subset.as_deref(),
            count: s.count,
            seed,
        };
        runner.stage(
            "export-stimuli",
            &[("treebank", &treebank), ("variants", &variants), ("predictions", &predictions)],
            format!("count={} subset={:?} seed={seed}", s.count, s.subset),
            &names(&["stimuli.tsv"]),
            || stages::export_stimuli(&stimuli_inputs, &stimuli).map(drop),
        )?;
    }

    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        log_base: log_base.as_str().to_string(),
        config_sha256: config_sha256.to_string(),
        identity: String::new(),
        inputs: runner.inputs,
        stages: runner.records,
        timings: runner.timings,
    };
    manifest.identity = identity(&manifest);
    stages::write_text(&out.join(MANIFEST), &toml::to_string(&manifest).expect("manifests serialize"))?;
    Ok(manifest)
}

fn identity(m: &RunManifest) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}\n{}\n{}\n{}\n", m.version, m.seed, m.log_base, m.config_sha256));
    for (k, v) in &m.inputs {
        h.update(format!("input {k} {v}\n"));
    }
    for s in &m.stages {
        h.update(format!("stage {} {}\n", s.name, s.key));
        for (k, v) in &s.outputs {
            h.update(format!("output {k} {v}\n"));
        }
    }
    format!("{:x}", h.finalize())
}
