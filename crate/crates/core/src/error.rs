use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LiicError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LiicError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid instance {id}: {message}")]
    InvalidInstance { id: String, message: String },

    #[error("template error: {0}")]
    Template(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("backend transport error: {0}")]
    Transport(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LiicError {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        LiicError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
