use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("state order mismatch: expected {expected}, got {got}")]
    OrderMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("singular jacobian (|det| = {det:e}): non-hyperbolic or defective fixed point")]
    SingularJacobian { det: f64 },

    #[error("non-hyperbolic orbit: multiplier at distance {distance:e} from the unit circle")]
    NonHyperbolic { distance: f64, multipliers: Vec<(f64, f64)> },

    #[error("boundary margin violated: {0}")]
    BoundaryMargin(String),

    #[error("block rejected: {0}")]
    BlockRejected(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidInput(msg.into())
}
