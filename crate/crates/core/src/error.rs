use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("line {line}: parse error: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: invalid record: {message}")]
    Validation { line: u64, message: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("replay buffer holds {have} experiences, {need} required")]
    NotReady { have: usize, need: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
