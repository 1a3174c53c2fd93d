//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any part of the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-finite value {value} at {context}")]
    NonFinite { value: f64, context: String },

    #[error("time order violation: t = {t} is before last update {last}")]
    TimeOrder { t: u64, last: u64 },

    #[error("interval {t} is not after the last processed interval {last}")]
    OutOfOrder { t: u64, last: u64 },

    #[error(
        "calibration budget exhausted after {attempts} attempts: \
         target {target} +/- {precision}, closest achieved {closest}"
    )]
    CalibrationBudget {
        attempts: usize,
        target: f64,
        precision: f64,
        closest: f64,
    },

    #[error("stream exhausted: {emitted} of {total} instances already generated")]
    StreamExhausted { emitted: u64, total: u64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
