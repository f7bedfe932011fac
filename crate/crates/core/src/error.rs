use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("field has {got} samples, grid has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("degenerate field: {0}")]
    Degenerate(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unstable step: {0}")]
    UnstableStep(String),
    #[error("potential is not confining: {0}")]
    NonConfining(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
