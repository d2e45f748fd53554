//! Command-line sweeps, reports and verification drivers for `snsqkd`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod hexfloat;
pub mod scan;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{run, Cli, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Core(#[from] snsqkd::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CliError>;
