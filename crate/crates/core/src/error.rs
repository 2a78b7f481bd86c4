//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("activation out of range: neuron {neuron}, sample {sample} (k={k}, n={n})")]
    ActivationOutOfRange {
        neuron: usize,
        sample: usize,
        k: usize,
        n: usize,
    },

    #[error("duplicate activation for neuron {neuron} at sample {sample} (row {row})")]
    DuplicateActivation {
        neuron: usize,
        sample: usize,
        row: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
