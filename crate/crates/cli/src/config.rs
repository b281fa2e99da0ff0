//! Pipeline configuration: one TOML table per stage. Relative paths resolve
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use orderlab_core::corpus::ColumnMap;
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub ingest: IngestSection,
    pub ngram: Option<NgramSection>,
    pub lstm: Option<LstmSection>,
    #[serde(default)]
    pub variants: VariantsSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub rank: RankSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    pub stimuli: Option<StimuliSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub output: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_log_base")]
    pub log_base: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnsSection {
    pub id: usize,
    pub form: usize,
    pub lemma: usize,
    pub upos: usize,
    pub head: usize,
    pub deprel: usize,
}

impl From<ColumnsSection> for ColumnMap {
    fn from(c: ColumnsSection) -> Self {
        ColumnMap { id: c.id, form: c.form, lemma: c.lemma, upos: c.upos, head: c.head, deprel: c.deprel }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub treebank: PathBuf,
    pub columns: Option<ColumnsSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgramSection {
    pub corpus: PathBuf,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default = "default_cache_weight")]
    pub cache_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmSection {
    pub corpus: PathBuf,
    pub valid: Option<PathBuf>,
    #[serde(default = "default_width")]
    pub d_emb: usize,
    #[serde(default = "default_width")]
    pub d_hidden: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    #[serde(default = "default_clip")]
    pub grad_clip: f64,
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default = "default_adapt_lr")]
    pub adapt_lr: f64,
    #[serde(default = "default_clip")]
    pub adapt_clip: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantsSection {
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Treebank whose adjacent relation pairs define the filter; the ingested
    /// treebank when absent.
    pub grammar: Option<PathBuf>,
}

impl Default for VariantsSection {
    fn default() -> Self {
        Self { cap: default_cap(), grammar: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    /// `id<TAB>value` file filling the `pcfg_surp` column.
    pub external: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSection {
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Feature names joined by `+` or `,`, or `all`; the first is the
    /// baseline for comparisons.
    #[serde(default = "default_subsets")]
    pub subsets: Vec<String>,
    #[serde(default)]
    pub standardize: bool,
}

impl Default for RankSection {
    fn default() -> Self {
        Self { folds: default_folds(), subsets: default_subsets(), standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    pub verb_classes: Option<PathBuf>,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self { families: default_families(), verb_classes: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimuliSection {
    #[serde(default = "default_stimuli")]
    pub count: usize,
    pub subset: Option<String>,
}

fn default_seed() -> u64 {
    13
}
fn default_log_base() -> String {
    "2".into()
}
fn default_min_count() -> usize {
    2
}
fn default_cache_weight() -> f64 {
    0.05
}
fn default_width() -> usize {
    200
}
fn default_layers() -> usize {
    2
}
fn default_epochs() -> usize {
    10
}
fn default_base_lr() -> f64 {
    20.0
}
fn default_clip() -> f64 {
    0.25
}
fn default_lr_decay() -> f64 {
    4.0
}
fn default_adapt_lr() -> f64 {
    2.0
}
fn default_cap() -> usize {
    100
}
fn default_folds() -> usize {
    10
}
fn default_subsets() -> Vec<String> {
    vec!["all".into()]
}
fn default_families() -> Vec<String> {
    vec!["class".into(), "frame".into(), "conjunct".into()]
}
fn default_stimuli() -> usize {
    167
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads the file and makes every path absolute relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve(&base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.run.output);
        fix(&mut self.ingest.treebank);
        if let Some(n) = &mut self.ngram {
            fix(&mut n.corpus);
        }
        if let Some(l) = &mut self.lstm {
            fix(&mut l.corpus);
            if let Some(v) = &mut l.valid {
                fix(v);
            }
        }
        if let Some(g) = &mut self.variants.grammar {
            fix(g);
        }
        if let Some(e) = &mut self.features.external {
            fix(e);
        }
        if let Some(v) = &mut self.analyze.verb_classes {
            fix(v);
        }
    }
}
