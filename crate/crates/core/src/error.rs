use thiserror::Error;

/// Errors raised by the numerical and sampling routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix exponential overflowed (norm of t*A = {norm:e})")]
    Overflow { norm: f64 },

    #[error("quadrature did not reach the requested accuracy: estimated relative error {estimate:e} in {context}")]
    Accuracy { context: String, estimate: f64 },

    #[error("incompatible measure representations: {0}")]
    Representation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("spectral gate failed: {0}")]
    SpectralGate(String),

    #[error("sampling mode not supported for this model: {0}")]
    Mode(String),

    #[error("level {level} not reached for radius up to {limit:e}")]
    UnboundedSearch { level: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// True for errors caused by insufficient numerical accuracy, as opposed
    /// to bad inputs or violated hypotheses.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Accuracy { .. } | Error::Overflow { .. } | Error::UnboundedSearch { .. }
        )
    }
}
