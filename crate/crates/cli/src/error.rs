use std::path::{Path, PathBuf};

use orderlab_core::analysis::AnalysisError;
use orderlab_core::corpus::CorpusError;
use orderlab_core::features::FeatureError;
use orderlab_core::lstm::LstmError;
use orderlab_core::ngram::NgramError;
use orderlab_core::ranker::RankError;
use orderlab_core::variantgen::VariantError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: String, source: Box<CliError> },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Variant(#[from] VariantError),
    #[error(transparent)]
    Ngram(#[from] NgramError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Pool(#[from] orderlab_evalsvc::PoolError),
    #[error(transparent)]
    Serve(#[from] orderlab_evalsvc::ServeError),
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn input(path: &Path, message: impl Into<String>) -> CliError {
        CliError::Input { path: path.to_path_buf(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
