//! Batch runner for the survsel benchmark: manifests, result files and charts.

pub mod commands;
pub mod manifest;
pub mod output;
pub mod plot;

use std::path::PathBuf;

use thiserror::Error;

pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no data: {0}")]
    NoData(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<survsel::Error> for CliError {
    fn from(e: survsel::Error) -> Self {
        match e {
            survsel::Error::InvalidParameter(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
