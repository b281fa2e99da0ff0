//! Argument definitions and dispatch.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use orderlab_core::corpus::ColumnMap;
use orderlab_core::features::IsConfig;
use orderlab_core::lstm::{AdaptationConfig, LstmDims, LstmTrainConfig};
use orderlab_core::ngram::{LogBase, NgramConfig};
use orderlab_core::ranker::{FeatureSubset, FitConfig};
use orderlab_core::synthetic::SyntheticConfig;
use orderlab_evalsvc::ServeConfig;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{run_pipeline, sha256_file, RunOptions};
use crate::stages::{self, AnalyzeInputs, FeatureInputs, RankInputs, StimuliInputs};

const DEFAULT_SEED: u64 = 13;

#[derive(Debug, Parser)]
#[command(
    name = "orderlab",
    version,
    about = "Word-order choice experiments: variants, surprisal features, pairwise ranking"
)]
pub struct Cli {
    /// Seed for variant sampling, fold assignment, model initialisation and stimulus sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Logarithm base for surprisal: 2 (bits) or e (nats).
    #[arg(long, global = true, value_parser = parse_base)]
    pub log_base: Option<LogBase>,
    /// Worker threads for parallel stages; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_base(s: &str) -> std::result::Result<LogBase, String> {
    LogBase::parse(s).ok_or_else(|| format!("expected 2 or e, got {s:?}"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a toy treebank and language-model corpus.
    Synth(SynthArgs),
    /// Validate a treebank and write the accepted trees as CoNLL-U.
    Ingest(IngestArgs),
    /// Train a Katz-backoff trigram model.
    TrainNgram(TrainNgramArgs),
    /// Train an LSTM language model.
    TrainLstm(TrainLstmArgs),
    /// Generate preverbal-constituent reorderings of every sentence.
    GenVariants(GenVariantsArgs),
    /// Compute the feature table for references and variants.
    Features(FeaturesArgs),
    /// Fit regressions and cross-validate feature subsets.
    Rank(RankArgs),
    /// Per-subset accuracy comparisons, correlations and case density.
    Analyze(AnalyzeArgs),
    /// Sample reference/variant pairs as a stimulus pool for human evaluation.
    ExportStimuli(ExportStimuliArgs),
    /// Serve the forced-choice evaluation.
    ServeEval(ServeEvalArgs),
    /// Run every stage from a pipeline config, reusing unchanged stages.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub treebank: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub documents: usize,
    #[arg(long, default_value_t = 5)]
    pub sentences: usize,
    #[arg(long, default_value_t = 2000)]
    pub lm_sentences: usize,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub treebank: PathBuf,
    /// Output CoNLL-U file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-sentence accept/reject report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// 0-based positions of id,form,lemma,upos,head,deprel.
    #[arg(long, value_parser = parse_columns)]
    pub columns: Option<ColumnMap>,
}

fn parse_columns(s: &str) -> std::result::Result<ColumnMap, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad column {x:?}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [id, form, lemma, upos, head, deprel] => Ok(ColumnMap { id, form, lemma, upos, head, deprel }),
        _ => Err("expected six comma-separated positions".into()),
    }
}

#[derive(Debug, Args)]
pub struct TrainNgramArgs {
    /// One whitespace-tokenised sentence per line.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct TrainLstmArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training manifest; defaults to the model path with a `.manifest.tsv` suffix.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub d_emb: usize,
    #[arg(long, default_value_t = 200)]
    pub d_hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 2)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct GenVariantsArgs {
    #[arg(long)]
    pub treebank: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Treebank defining attested relation bigrams; the input treebank when absent.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
    /// Maximum set size including the reference.
    #[arg(long, default_value_t = 100)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub treebank: PathBuf,
    #[arg(long)]
    pub variants: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ngram: Option<PathBuf>,
    #[arg(long)]
    pub lstm: Option<PathBuf>,
    /// `id<TAB>value` file for the pcfg_surp column, ids as `sentence_id:variant_id`.
    #[arg(long)]
    pub external: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub cache_weight: f64,
    #[arg(long, default_value_t = 2.0)]
    pub adapt_lr: f64,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub treebank: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Feature subset such as `trigram_surp+dep_length`, or `all`; repeat for more. The first is the baseline.
    #[arg(long = "subset", default_value = "all")]
    pub subsets: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub verb_classes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub treebank: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "family", default_values_t = ["class".to_string(), "frame".to_string(), "conjunct".to_string()])]
    pub families: Vec<String>,
    #[arg(long)]
    pub verb_classes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportStimuliArgs {
    #[arg(long)]
    pub treebank: PathBuf,
    #[arg(long)]
    pub variants: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 167)]
    pub count: usize,
    /// Prediction column taken as the model's choice; the last subset when absent.
    #[arg(long)]
    pub subset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeEvalArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub log_path: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Built UI bundle served for non-API paths.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Ignore cached stages.
    #[arg(long)]
    pub force: bool,
}

pub fn execute(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        // Fails only when a pool already exists, which then stays in use.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let log_base = cli.log_base.unwrap_or(LogBase::Two);
    match cli.command {
        Command::Synth(a) => {
            let cfg = SyntheticConfig { documents: a.documents, sentences_per_document: a.sentences, seed };
            stages::synth(&cfg, a.lm_sentences, &a.treebank, &a.corpus)?;
            eprintln!("wrote {} and {}", a.treebank.display(), a.corpus.display());
        }
        Command::Ingest(a) => {
            let report = a.report.unwrap_or_else(|| a.out.with_extension("report.tsv"));
            let s = stages::ingest(&a.treebank, &a.columns.unwrap_or_default(), &a.out, &report)?;
            eprintln!("accepted {} sentences, rejected {}", s.accepted, s.rejected);
        }
        Command::TrainNgram(a) => {
            let lm = stages::train_ngram(
                &a.corpus,
                NgramConfig { min_count: a.min_count, log_base, ..Default::default() },
                &a.out,
            )?;
            eprintln!("vocabulary {} words", lm.vocab().len());
        }
        Command::TrainLstm(a) => {
            let manifest = a.manifest.unwrap_or_else(|| a.out.with_extension("manifest.tsv"));
            let config = LstmTrainConfig {
                dims: LstmDims { d_emb: a.d_emb, d_hidden: a.d_hidden, n_layers: a.layers },
                epochs: a.epochs,
                base_lr: a.lr,
                min_count: a.min_count,
                seed,
                log_base,
                ..Default::default()
            };
            let lm = stages::train_lstm(&a.corpus, a.valid.as_deref(), &config, &a.out, &manifest)?;
            for e in lm.history() {
                eprintln!("epoch {} lr {} train loss {:.4}", e.epoch, e.lr, e.train_loss);
            }
        }
        Command::GenVariants(a) => {
            let s = stages::gen_variants(&a.treebank, a.grammar.as_deref(), a.cap, seed, &a.out)?;
            eprintln!(
                "{} sentences, {} variants ({} filtered, {} duplicate surfaces)",
                s.sentences, s.variants, s.filtered_out, s.duplicates_dropped
            );
        }
        Command::Features(a) => {
            let inputs = FeatureInputs {
                treebank: &a.treebank,
                variants: &a.variants,
                ngram: a.ngram.as_deref(),
                lstm: a.lstm.as_deref(),
                external: a.external.as_deref(),
                cache_weight: a.cache_weight,
                adaptation: AdaptationConfig { learning_rate: a.adapt_lr, ..Default::default() },
                is_config: IsConfig::default(),
                seed,
            };
            let n = stages::features(&inputs, &a.out)?;
            eprintln!("{n} feature rows");
        }
        Command::Rank(a) => {
            let subsets: Vec<FeatureSubset> =
                a.subsets.iter().map(|s| FeatureSubset::parse(s)).collect::<std::result::Result<_, _>>()?;
            let inputs = RankInputs {
                features: &a.features,
                treebank: &a.treebank,
                verb_classes: a.verb_classes.as_deref(),
                subsets: &subsets,
                folds: a.folds,
                seed,
                fit: FitConfig { standardize: a.standardize, ..Default::default() },
            };
            let s = stages::rank(&inputs, &a.out)?;
            for (label, acc) in &s.accuracy {
                println!("{label}\t{acc:.2}");
            }
        }
        Command::Analyze(a) => {
            let inputs = AnalyzeInputs {
                features: &a.features,
                predictions: &a.predictions,
                treebank: &a.treebank,
                verb_classes: a.verb_classes.as_deref(),
                families: &a.families,
            };
            for p in stages::analyze(&inputs, &a.out)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::ExportStimuli(a) => {
            let inputs = StimuliInputs {
                treebank: &a.treebank,
                variants: &a.variants,
                predictions: &a.predictions,
                subset: a.subset.as_deref(),
                count: a.count,
                seed,
            };
            let n = stages::export_stimuli(&inputs, &a.out)?;
            eprintln!("{n} stimulus items");
        }
        Command::ServeEval(a) => {
            let cfg = ServeConfig {
                addr: SocketAddr::new(a.host, a.port),
                pool: a.pool,
                seed,
                log_path: a.log_path,
                static_dir: a.static_dir,
            };
            eprintln!("serving on http://{}", cfg.addr);
            let rt =
                tokio::runtime::Runtime::new().map_err(|e| CliError::Config(format!("cannot start runtime: {e}")))?;
            rt.block_on(orderlab_evalsvc::serve(cfg))?;
        }
        Command::Run(a) => {
            let cfg = PipelineConfig::load(&a.config)?;
            let opts = RunOptions { force: a.force, seed: cli.seed, log_base: cli.log_base };
            let manifest = run_pipeline(&cfg, &sha256_file(&a.config)?, opts, &mut |line| eprintln!("{line}"))?;
            println!("{}", manifest.identity);
        }
    }
    Ok(())
}
