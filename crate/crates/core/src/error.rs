use thiserror::Error;

/// Errors surfaced by solvers and measurement routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solution diverged: {0}")]
    Diverged(String),

    #[error("time-step constraint violated: {0}")]
    StepConstraint(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("requested point outside tabulated range: {0}")]
    OutOfRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
