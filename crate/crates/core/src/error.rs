use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("unknown agent label `{0}`")]
    UnknownAgent(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("feature registry mismatch: {0}")]
    RegistryMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("training failed in fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("training failed for {agent}: {source}")]
    Agent {
        agent: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
