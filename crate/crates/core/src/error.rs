use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("index ({i}, {j}) outside {nx}x{ny} grid")]
    IndexOutOfRange { i: usize, j: usize, nx: usize, ny: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("order {order} operator needs at least {min} points, got {n}")]
    TooFewPoints { order: usize, n: usize, min: usize },
    #[error("unsupported accuracy order {0} (use 2 or 4)")]
    UnsupportedOrder(usize),
    #[error("diffusivity must be strictly positive, got {value} at point {index}")]
    NonPositiveKappa { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dense audit needs {size} unknowns, cap is {cap}")]
    DenseCapExceeded { size: usize, cap: usize },
    #[error("field line from node {node} ({x}, {y}) failed: {reason}")]
    TraceFailed { node: usize, x: f64, y: f64, reason: String },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("conjugate gradient stalled after {iters} iterations (relative H-norm residual {residual:e})")]
    CgNotConverged { iters: usize, residual: f64 },
    #[error("step {step} at t = {t}: {source}")]
    Step { step: usize, t: f64, #[source] source: Box<Error> },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error in {path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, #[source] source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
