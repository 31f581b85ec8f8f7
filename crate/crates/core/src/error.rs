use std::path::PathBuf;

use freqsweep_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// A history, horizon or frame window leaves the scene span.
    #[error("validity error: {0}")]
    Validity(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("frequency error: {0}")]
    Frequency(String),

    /// A requested render time is not on the scene's native grid.
    #[error("anchor error: {0}")]
    Anchor(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f64 },

    #[error("incomplete frequency response: {0}")]
    IncompleteResponse(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
