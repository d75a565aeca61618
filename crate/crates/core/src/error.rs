use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A precondition of an operation was not met by its inputs.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// `E_F[w(X)]` is too small for the weighted distribution `F_w` to exist.
    #[error("weighted mass {mass:e} is below the floor; the weighted forecast distribution is undefined")]
    WeightedMassZero { mass: f64 },

    /// Conditioning on `Y > t` when the forecast puts (numerically) no mass above `t`.
    #[error("forecast CDF at the threshold is {cdf_at_threshold}; conditional PIT is undefined")]
    DegenerateConditional { cdf_at_threshold: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Quadrature or another numerical routine failed to reach its tolerance.
    #[error("numerical failure in {routine}: {detail}")]
    Numerical { routine: &'static str, detail: String },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }
}
