use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the command-line harness.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("{file}, line {line}, column {column}: {reason}")]
    Cell {
        file: PathBuf,
        line: u64,
        column: usize,
        reason: String,
    },

    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("subject id mismatch: {0}")]
    IdMismatch(String),

    #[error("sweep grid is empty")]
    EmptyGrid,

    #[error(transparent)]
    Core(#[from] ccsl::CcslError),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
