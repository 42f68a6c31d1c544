use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("state {x} outside the domain ({lower}, {upper})")]
    Domain { x: f64, lower: f64, upper: f64 },
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("boundary invariant violated: {0}")]
    Boundary(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
