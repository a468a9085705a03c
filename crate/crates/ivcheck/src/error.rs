//! Crate error type.

use thiserror::Error;

/// Errors produced by tabulation, testing, and orchestration.
#[derive(Debug, Error)]
pub enum Error {
    /// A mapped column is absent from the CSV header.
    #[error("schema error: column `{0}` not found in header")]
    MissingColumn(String),

    /// A cell failed to parse; the row number is 1-based counting the header.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// An estimator needs observations in both instrument arms.
    #[error("estimation error: instrument arm z={0} has no observations")]
    EmptyArm(usize),

    /// A binary-model operation was applied to a non-binary table.
    #[error("dimension error: expected a binary table (L=M=2), got L={l}, M={m}")]
    NotBinary { l: usize, m: usize },

    /// A point lies outside the probability simplex.
    #[error("domain error: point outside the simplex ({0})")]
    OutsideSimplex(String),

    /// An invalid tuning or level parameter.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// No stratum had both instrument arms populated.
    #[error("no usable strata: every stratum has an empty instrument arm")]
    NoUsableStrata,

    /// Malformed simulation scenario or report configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
