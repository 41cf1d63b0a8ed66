use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ArenaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ArenaError {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    /// A dataset row that does not conform to the schema. `line` is the
    /// 1-based line in the source file, header included.
    #[error("data error at line {line}: {message}")]
    Data { line: u64, message: String },

    #[error("trace error: {0}")]
    Trace(String),

    #[error("protocol error: {0}")]
    Protocol(String),

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

impl ArenaError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        ArenaError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ArenaError::Io { path: path.into(), source }
    }
}
