use thiserror::Error;

use crate::critical::SpecViolation;

#[derive(Debug, Error)]
pub enum DmfError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("stack has {got} layers, problem has depth {expected}")]
    DepthMismatch { expected: usize, got: usize },

    #[error("depth {depth} is not supported here (requires L >= 3)")]
    UnsupportedDepth { depth: usize },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("invalid critical spec: {0}")]
    InvalidSpec(#[from] SpecViolation),

    #[error("certificate clause does not apply: {0}")]
    ClauseNotApplicable(String),

    #[error("not a critical point: gradient norm {grad_norm:e} exceeds {tol:e}")]
    NotCritical { grad_norm: f64, tol: f64 },

    #[error("gradient descent diverged at iteration {iteration} (loss {loss:e})")]
    Diverged { iteration: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, DmfError>;
