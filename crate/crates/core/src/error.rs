//! Error type shared by the whole crate.

use thiserror::Error;

/// Everything that can go wrong in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Lasso solver did not converge after {iterations} iterations (last KKT residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("coupled simulation needs level >= 1 (a coarse companion grid must exist)")]
    CoarsestLevel,

    #[error("no admissible level: no curve entry satisfies e < eta^2 = {eta2:.3e}")]
    NoAdmissibleLevel { eta2: f64 },

    #[error("MSE target {eta2:.3e} not reached before N = {n_max} (last MSE {last_mse:.3e})")]
    MseTargetNotReached {
        eta2: f64,
        n_max: u64,
        last_mse: f64,
        trace: Vec<(u64, f64)>,
    },

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("malformed problem document: {0}")]
    MalformedDocument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
