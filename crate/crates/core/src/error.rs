use thiserror::Error;

/// Errors surfaced by geometry, model, and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// The inverse exponential (or a transport along a minimizing geodesic)
    /// is undefined because the target lies on the cut locus of the base.
    #[error("point lies on (or numerically at) the cut locus: {0}")]
    CutLocus(String),

    /// A matrix required to be symmetric positive definite is not.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// An iterative procedure exhausted its iteration budget.
    #[error("no convergence after {iterations} iterations in {what}")]
    NoConvergence { what: String, iterations: usize },

    /// A covariance update collapsed (e.g. all residuals zero).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A basis matrix has (numerically) deficient row rank.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// Invalid configuration (basis size, grid, ...).
    #[error("invalid configuration: {0}")]
    InvalidSpec(String),

    /// Inputs disagree in dimension, grid, or manifold.
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
