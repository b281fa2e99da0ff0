//! Forced-choice evaluation service: serves a context sentence with two
//! candidate continuations, records judgments in an append-only log and
//! scores human choices against corpus references and model predictions.

pub mod api;
pub mod log;
pub mod pool;
pub mod results;

pub use api::{router, serve, AppState, ServeConfig, ServeError};
pub use log::{effective_judgments, Choice, JudgmentLog, JudgmentRecord, LogError};
pub use pool::{load_pool, parse_pool, write_pool, PoolError, Presentation, StimulusItem};
pub use results::{compute_results, human_label, ItemResult, ResultsSummary};
