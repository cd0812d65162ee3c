//! Error type shared by the library modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("trajectory must contain at least {min} samples, got {got}")]
    EmptyTrajectory { min: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("input out of range: {0}")]
    InputRange(String),

    #[error("cost matrix {matrix} is not positive definite")]
    SingularCost { matrix: &'static str },

    #[error("infeasible transition in segment {segment}: {reason}")]
    InfeasibleSegment { segment: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("state diverged (non-finite) at iteration {iteration}, outer step {step}")]
    Divergence { iteration: usize, step: usize },

    #[error("correction file: {0}")]
    CorrectionFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
