use thiserror::Error;

/// Errors raised by the estimators and bound computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The design cannot support the requested estimator, e.g. a stratum
    /// with no units in one arm.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    /// The estimated complier share is too small for the Wald estimator.
    #[error("weak instrument: {0}")]
    WeakInstrument(String),
    /// Monotonicity or the exclusion restriction fails on the supplied data.
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
    /// Least-squares design matrix is rank deficient.
    #[error("regression failed: {0}")]
    Regression(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateDesign(msg.into())
    }
}
