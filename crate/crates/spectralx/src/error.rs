//! Crate-wide error type with stable machine-readable kinds.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// Malformed text input; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error("reconstruction contract violated: {0}")]
    Reconstruction(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingDiverged { epoch: usize, message: String },

    #[error("external classifier: {0}")]
    External(String),

    #[error("mask coverage: {0}")]
    Coverage(String),

    #[error("dataset not found: {0}")]
    DatasetNotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable kind tag used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::UnsupportedConfiguration(_) => "unsupported-configuration",
            Error::Format { .. } => "format",
            Error::Reconstruction(_) => "reconstruction-contract",
            Error::TrainingDiverged { .. } => "training-diverged",
            Error::External(_) => "external-classifier",
            Error::Coverage(_) => "coverage",
            Error::DatasetNotFound(_) => "dataset-not-found",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
