use std::io;

use thiserror::Error;

/// Errors raised by classifiers, loaders and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A classifier or pipeline was built or fed with an incompatible shape.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimensionality mismatch: expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The caller violated an operation precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed input data. `line` is 1-based and counts the header.
    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
