use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{what} is not a probability simplex (sum = {sum}, min = {min})")]
    NotSimplex {
        what: &'static str,
        sum: f64,
        min: f64,
    },

    #[error("backward called on {0} without a recorded forward pass")]
    NoForward(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid layer index {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing opinion distributions: {0}")]
    MissingDistributions(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

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
