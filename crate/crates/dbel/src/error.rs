//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {path} contains no data rows")]
    EmptyFile { path: String },

    #[error("ragged row in {path}: row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-numeric cell in {path} at row {row}, column {col}: {content:?}")]
    NonNumericCell {
        path: String,
        row: usize,
        col: usize,
        content: String,
    },

    #[error("dimension mismatch: expected {expected} components, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("delta must lie strictly inside (0, 0.25), got {0}")]
    InvalidDelta(f64),

    #[error("sample too small for DBEL window: need at least {min} observations per arm, got {got}")]
    SampleTooSmall { min: usize, got: usize },

    #[error("window bounds need a sample size of at least 2, got {0}")]
    WindowSampleTooSmall(usize),

    #[error(
        "exact candidate enumeration needs {required} statistic evaluations but only {allowed} \
         are allowed; rerun in approximate mode or raise the budget"
    )]
    BudgetExceeded { required: u128, allowed: u64 },

    #[error("calibration table does not match this run: {0}")]
    CalibrationMismatch(String),

    #[error("no threshold for alpha = {alpha} in the calibration table (available: {available})")]
    AlphaNotCalibrated { alpha: f64, available: String },

    #[error("corrupt calibration table {path}: {reason}")]
    CorruptTable { path: String, reason: String },

    #[error("calibration table {path} has schema version {found}, expected {expected}")]
    SchemaMismatch {
        path: String,
        found: u32,
        expected: u32,
    },

    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid sequential plan: {0}")]
    InvalidPlan(String),

    #[error("sequential step rejected: {0}")]
    SequentialStep(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("resampling error: {0}")]
    Resampling(String),
}
