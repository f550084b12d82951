//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("saddlepoint solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("saddlepoint solver found no admissible damped step inside the CGF domain")]
    DomainExit,

    #[error("Hessian of the CGF is numerically singular or not positive definite")]
    SingularHessian,

    #[error("log-likelihood Hessian contains non-finite entries")]
    NonFiniteHessian,

    #[error("gradient norm {grad_norm:.3e} exceeds the stationarity threshold {threshold:.3e}")]
    NotAStationaryPoint { grad_norm: f64, threshold: f64 },

    #[error("log-likelihood Hessian is not negative definite or too ill-conditioned: {0}")]
    IndefiniteHessian(String),

    #[error("optimizer exceeded the iteration limit")]
    MaxIter,

    #[error("line search failed to find an acceptable step")]
    LineSearchFailed,

    #[error("slope fit needs at least {needed} usable points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("exhaustive oracle infeasible: {0}")]
    OracleTooLarge(String),

    #[error("latent-history enumeration supports 2..=6 occasions, got {0}")]
    TooManyOccasions(usize),

    #[error("direct correction-term sums are limited to dimension {limit}, got {got}")]
    DimensionTooLarge { limit: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { expected, got }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
