//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive semidefinite: smallest eigenvalue {lambda_min:e} below -{tol:e}")]
    NonPsdInput { lambda_min: f64, tol: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported activation for kernel recursion: {0}")]
    UnsupportedActivation(String),

    #[error("quadrature not supported beyond 4 dimensions (got {0}); use Monte-Carlo")]
    DimensionTooLarge(usize),

    #[error("base point is numerically singular (lambda_min {0:e}); differential undefined")]
    SingularBasePoint(f64),

    #[error("size mismatch between empirical measures: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("likelihood vanishes on every sample; posterior undefined")]
    VanishingLikelihood,

    #[error("normalizer must be positive: {0}")]
    NonpositiveNormalizer(String),

    #[error("log-log fit requires positive values: {0}")]
    NonpositiveValue(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("need at least 2 replicas to form a covariance, got {0}")]
    InsufficientReplicas(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
