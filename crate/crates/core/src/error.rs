use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical estimate failed its own accuracy check.
    #[error("accuracy error: {what} (change {change:.3e} exceeds {tolerance:.3e})")]
    Accuracy {
        what: String,
        change: f64,
        tolerance: f64,
    },

    /// A structural precondition of an algorithm was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Two operators live on different bases.
    #[error("basis mismatch: dimension {left} vs {right}")]
    BasisMismatch { left: usize, right: usize },

    /// The requested basis exceeds the configured size guard.
    #[error("basis dimension {dimension} exceeds guard {limit}")]
    DimensionGuard { dimension: usize, limit: usize },

    /// An iterative solver stopped before reaching its tolerance.
    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Mechanical branch identification found competing candidates.
    #[error("ambiguous mechanical branch: candidate levels {candidates:?}")]
    AmbiguousBranch { candidates: Vec<(usize, f64)> },
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
