use thiserror::Error;

use crate::ergodic::LadderEntry;
use crate::field::ScalarField;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing parameter `{name}` required by {context}")]
    MissingParameter { name: &'static str, context: String },

    #[error("matrix is not symmetric (|x12 - x21| = {0:e})")]
    NotSymmetric(f64),

    #[error("diffusion matrix not positive semidefinite at node {node}, control {alpha} (min eigenvalue {min_eig:e})")]
    NotPsd { node: usize, alpha: usize, min_eig: f64 },

    #[error("negative zeroth-order coefficient c0 = {value} at node {node}, control {alpha}")]
    NegativeZerothOrder { node: usize, alpha: usize, value: f64 },

    #[error("sigma * sigma^T differs from a at node {node}, control {alpha} by {gap:e}")]
    SigmaMismatch { node: usize, alpha: usize, gap: f64 },

    #[error("non-finite value at node {0}")]
    NonFinite(usize),

    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty sample set: {0}")]
    EmptySamples(&'static str),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("linear system is singular to working precision")]
    Singular,

    #[error("internal solver failure: {0}")]
    Internal(String),

    #[error("time step {dt:e} violates the monotonicity bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("non-finite solution at t = {time}; last valid snapshot at t = {}", .last_valid.0)]
    BlowUp {
        time: f64,
        last_valid: Box<(f64, ScalarField)>,
    },

    #[error("discount ladder aborted at step {step} ({} completed): {source}", .completed.len())]
    LadderAborted {
        step: usize,
        completed: Vec<LadderEntry>,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
