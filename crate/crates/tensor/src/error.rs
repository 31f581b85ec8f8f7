use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),

    /// A NaN or infinity appeared in the output of an operation.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;
