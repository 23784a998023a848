//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible. Always names both shapes.
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A configuration value is out of its documented range.
    #[error("invalid config: {0}")]
    Config(String),

    /// A caller broke an API contract (missing gradient, mismatched trace).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data violates a documented invariant (e.g. labels not in {0,1}).
    #[error("invalid data: {0}")]
    Data(String),

    /// A numeric result left the finite range.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A file does not match the expected binary or JSON layout.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}
