use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: no interactions found")]
    EmptyInput(PathBuf),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("user {user}: only {available} negative candidates, {requested} requested")]
    InsufficientNegatives {
        user: usize,
        available: usize,
        requested: usize,
    },

    #[error("singular normal equations ({0}); use a strictly positive regularization")]
    Singular(String),

    #[error("tower geometry: {0}")]
    Geometry(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): {detail}")]
    Diverged {
        epoch: usize,
        learning_rate: f64,
        detail: String,
    },

    #[error("statistical test not applicable: {0}")]
    NotApplicable(String),

    #[error("data leakage: {0}")]
    Leakage(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
