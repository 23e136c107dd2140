use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}, line {line}: {msg}")]
    Dataset { path: PathBuf, line: u64, msg: String },

    #[error("{0}")]
    Layout(String),

    #[error(transparent)]
    Core(#[from] mec_core::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
