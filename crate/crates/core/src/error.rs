use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the SBL library and experiment harness.
#[derive(Debug, Error)]
pub enum SblError {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical breakdown in column {column} at CG iteration {iteration}: {reason}")]
    NumericalBreakdown {
        column: usize,
        iteration: usize,
        reason: String,
    },

    #[error("degenerate probe: zero denominator at coordinate {index}")]
    DegenerateProbe { index: usize },

    #[error("cholesky factorization failed{}: non-positive pivot at {pivot}", .iteration.map(|t| format!(" at EM iteration {t}")).unwrap_or_default())]
    Factorization {
        iteration: Option<usize>,
        pivot: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error on {path}: {message}")]
    Serialization { path: PathBuf, message: String },
}

impl SblError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SblError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SblError>;
