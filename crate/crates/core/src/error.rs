//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed file contents (bad magic, version, or dtype).
    #[error("format error: {0}")]
    Format(String),

    /// Structurally inconsistent data (broken channel chain, bad schedule).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("target acceleration {target} unreachable; best achieved {achieved:.4}")]
    MaskAcceleration { target: f64, achieved: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
