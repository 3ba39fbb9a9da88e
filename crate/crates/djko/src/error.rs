use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("time step must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("time step {tau} exceeds the stability bound 1/(2B) = {bound} for growth bound B = {b}")]
    TauTooLarge { tau: f64, bound: f64, b: f64 },
    #[error("feasibility violated: {0}")]
    Feasibility(String),
    #[error("domain too small: support within {margin} of the boundary at step {step}")]
    DomainTooSmall { step: usize, margin: f64 },
    #[error("transport map leaves the domain at node {node} by {overshoot}")]
    MapLeavesDomain { node: usize, overshoot: f64 },
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("barrier construction failed: {0}")]
    Barrier(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("growth model error: {0}")]
    Growth(String),
    #[error("snapshot format error: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
