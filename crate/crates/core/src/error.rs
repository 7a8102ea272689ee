use thiserror::Error;

use crate::solver::SolveResult;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("exponent p must satisfy 1 < p < inf (got {0})")]
    InvalidExponent(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("coefficients are not elliptic: k = {k} >= 1")]
    NotElliptic { k: f64 },
    #[error("iteration did not converge after {} steps (residual {})", .best.iterations, .best.residual)]
    NotConverged { best: Box<SolveResult> },
    #[error("trivial input: {0}")]
    TrivialInput(String),
    #[error("empty cube family")]
    EmptyFamily,
    #[error("inverse map failed at {flagged} of {total} nodes")]
    Inversion { flagged: usize, total: usize },
    #[error("malformed field data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
