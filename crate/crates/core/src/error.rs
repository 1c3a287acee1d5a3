use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("corrupt dataset: {file}: {record}: {reason}")]
    CorruptDataset { file: PathBuf, record: String, reason: String },

    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    /// A loss term became NaN or infinite during training.
    #[error("non-finite loss term {term} at epoch {epoch}, batch {batch}: {value}")]
    NonFiniteLoss { term: &'static str, epoch: usize, batch: usize, value: f64 },

    #[error("gradient check failed for {group}: relative error {error:.3e} exceeds {tolerance:.1e}")]
    GradientCheck { group: String, error: f64, tolerance: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn corrupt(file: impl Into<PathBuf>, record: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::CorruptDataset { file: file.into(), record: record.into(), reason: reason.into() }
    }
}
