//! Error taxonomy shared by every module of the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes surfaced by the numerical routines.
///
/// `InvalidArgument` and `SpaceMismatch` are caller errors; the remaining
/// variants flag numerical trouble: an iteration that did not reach its
/// target residual, an internal cross-check that failed, or a mathematical
/// property (variational bound, martingale identity) observed to be
/// violated beyond its tolerance.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("property violated: {0}")]
    Property(String),
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn mismatch(message: impl Into<String>) -> Self {
        Error::SpaceMismatch(message.into())
    }

    pub(crate) fn consistency(message: impl Into<String>) -> Self {
        Error::Consistency(message.into())
    }
}
