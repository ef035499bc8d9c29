//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instrument point outside the family's declared domain: {0}")]
    Domain(String),

    #[error("operation not supported for this family: {0}")]
    Unsupported(String),

    #[error("no polynomial eigenbasis: (phi, psi) pair is unclassified")]
    NoPolynomialBasis,

    #[error("not an eigenfunction: residual {0} is nonzero")]
    NotAnEigenfunction(String),

    #[error("operator/polynomial mismatch: rational remainder does not cancel ({0})")]
    OperatorMismatch(String),

    #[error("numerical failure in {what}: {diagnostics}")]
    NumericalFailure { what: String, diagnostics: String },

    #[error("support truncation too small: tail mass {tail:.3e} exceeds {limit:.3e} at z = {z}")]
    TruncationTooSmall { tail: f64, limit: f64, z: f64 },

    #[error("ill-conditioned mu grid: {0}")]
    IllConditionedGrid(String),

    #[error("regressor matrix is rank deficient (rank {rank} < {cols}); increase ridge or reduce J")]
    RankDeficient { rank: usize, cols: usize },

    #[error("base family does not satisfy the Pearson/Ord relation: max residual {0:.3e}")]
    NotPearsonOrd(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset schema error: {0}")]
    Schema(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
