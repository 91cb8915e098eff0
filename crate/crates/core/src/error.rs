//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Underlying filesystem failure, tagged with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A cell or header of an input file failed to parse or violated a
    /// data invariant. `line` is 1-based and counts the header row.
    #[error("{path}: line {line}, column '{column}': {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },

    /// Dataset contains no rows with treatment label 0.
    #[error("dataset has no control rows (treatment label 0)")]
    NoControlRows,

    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix or vector had the wrong number of columns/entries.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Feature columns of the scoring data do not match the model.
    #[error("feature columns do not match the model (missing: [{}], extra: [{}])",
            missing.join(", "), extra.join(", "))]
    FeatureMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    /// Model fitting failed (degenerate data, singular system, ...).
    #[error("model fit failed: {0}")]
    Fit(String),

    /// A model document could not be decoded.
    #[error("malformed model document {path}: {message}")]
    ModelFormat { path: PathBuf, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
