use thiserror::Error;

/// Error type shared across the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("field does not belong to this grid (expected {expected}, got {got})")]
    GridMismatch { expected: String, got: String },

    #[error("convexity lost: {0}")]
    ConvexityLost(String),

    #[error("prescription inadmissible: {0}")]
    Inadmissible(String),

    #[error("time step underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("t_max = {t_max} reached without convergence (residual = {residual:e})")]
    TMaxExceeded { t_max: f64, residual: f64 },

    #[error("iteration failed to converge: {0}")]
    NonConvergence(String),

    #[error("continuation stage tau = {tau} failed: {source}")]
    ContinuationStage {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot mismatch: {0}")]
    SnapshotMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
