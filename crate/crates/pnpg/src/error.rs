//! Shared error type for the toolkit.

use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by operators, models, proximal solvers, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or operator had the wrong length/shape for the call.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    /// Input failed validation (non-finite entries, bad parameter range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A point lies outside the domain where the requested quantity exists.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// File output failed.
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }
}
