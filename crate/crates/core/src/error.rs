use thiserror::Error;

use crate::field::Representation;

#[derive(Debug, Error)]
pub enum GpeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected a field in {expected:?} representation, got {found:?}")]
    Representation {
        expected: Representation,
        found: Representation,
    },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-admissible field: {0}")]
    NonAdmissible(String),

    #[error("coupling ({lambda1}, {lambda2}) lies in the stable regime")]
    StableRegime { lambda1: f64, lambda2: f64 },

    #[error("no convergence after {iterations} iterations: {detail}")]
    NotConverged { iterations: usize, detail: String },

    #[error("geometry does not fit the box: {0}")]
    Geometry(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GpeError>;
