//! Command-line front end for the word-order experiment pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod stages;

pub use cli::{execute, Cli};
pub use error::{CliError, Result};
