use thiserror::Error;

/// Errors shared across the tilting, solver, estimation, VaR and bootstrap modules.
#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("theta = {theta} outside admissible domain ({lower}, {upper})")]
    ThetaOutOfDomain { theta: f64, lower: f64, upper: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient hits: {hits} samples exceeded the threshold, at least {needed} required; increase the sample count m")]
    InsufficientHits { hits: usize, needed: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
