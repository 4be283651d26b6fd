//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any toolkit operation.
#[derive(Debug, Error)]
pub enum Error {
    /// A CSV row could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input data violates a structural requirement (ordering, uniformity, ...).
    #[error("format error: {0}")]
    Format(String),

    /// An argument violates an operation precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The integrator produced a non-finite state.
    #[error("numerical failure at step {step}: {context}")]
    Numerics { step: usize, context: String },

    /// No dominant periodicity could be identified in the series.
    #[error("no dominant period: {0}")]
    NoDominantPeriod(String),

    /// A statistic is undefined because the input has no variance.
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
