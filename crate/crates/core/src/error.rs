use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("constraint matrix not full rank")]
    ConstraintRankDeficient,

    #[error("too many constraints: q = {q} exceeds p = {p}")]
    TooManyConstraints { q: usize, p: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is rank deficient")]
    RankDeficientDesign,

    #[error("LP solver did not converge after {iterations} iterations (gap {gap:.3e}, infeasibility {infeasibility:.3e})")]
    NoConvergence {
        iterations: usize,
        gap: f64,
        infeasibility: f64,
    },

    #[error("projection metric not positive definite")]
    NotPositiveDefinite,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("zero-variance residuals")]
    ZeroVarianceResiduals,

    #[error("need at least 7 candidates, got {0}")]
    TooFewCandidates(usize),

    #[error("B < 100: got {0} bootstrap replicates")]
    TooFewReplicates(usize),

    #[error("tested covariates collinear")]
    CollinearTested,
}
