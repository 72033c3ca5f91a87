//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by hierarchy construction, model fitting, covariance
/// estimation, reconciliation and the evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate bottom label `{0}`")]
    DuplicateLabel(String),

    #[error("bottom label must be non-empty")]
    EmptyLabel,

    #[error("hierarchy spec has no bottom labels")]
    EmptySpec,

    #[error("prefix length {length} is not shorter than bottom label `{label}`")]
    PrefixTooLong { length: usize, label: String },

    #[error("prefix lengths must be strictly increasing")]
    PrefixOrder,

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix in {context} must be square, got {rows}x{cols}")]
    NotSquare {
        context: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("series too short: need at least {min} observations, got {actual}")]
    SeriesTooShort { min: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("series `{0}` has zero variance")]
    DegenerateSeries(String),

    #[error("no stationary ARMA candidate found in the search grid")]
    NoStationaryCandidate,

    #[error("model order ({p},{q}) exceeds the allowed maximum of {max}")]
    OrderTooLarge { p: usize, q: usize, max: usize },

    #[error("fitting column `{label}` failed: {source}")]
    ColumnFit {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("residual matrix column {0} has zero variance")]
    ZeroVarianceColumn(usize),

    #[error("Cholesky factorization failed in {0}; matrix is not positive definite")]
    CholeskyFailure(&'static str),

    #[error("covariance estimate required for the {0} method")]
    MissingCovariance(&'static str),

    #[error("G does not satisfy the projection identities (max deviation {max_dev:.3e})")]
    NotAProjection { max_dev: f64 },

    #[error("summing matrix is not in bottom-last convention (identity block missing)")]
    MissingIdentityBlock,

    #[error("point is not coherent: discrepancy {discrepancy:.3e} exceeds tolerance {tol:.3e}")]
    IncoherentPoint { discrepancy: f64, tol: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("positive-definite repair failed after {0} iterations")]
    PdRepairFailed(usize),

    #[error("missing column `{0}` in panel file")]
    MissingColumn(String),

    #[error("non-numeric cell at row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: String },

    #[error("duplicate date label `{0}`")]
    DuplicateDate(String),

    #[error("baseline records ({method}, {kind}) not present")]
    MissingBaseline { method: String, kind: String },

    #[error("baseline mean for score {0} is zero; relative improvement undefined")]
    ZeroBaselineMean(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
