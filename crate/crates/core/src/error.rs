use thiserror::Error;

/// Errors raised by the signal, solver and recovery routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigendecomposition failed: matrix has non-finite entries")]
    NonFinite,

    #[error("solver hit the iteration cap ({iterations}) before converging")]
    MaxIters { iterations: usize },

    #[error("problem is infeasible: primal residual stalled at {residual:.3e}")]
    Infeasible { residual: f64 },

    #[error("measurements are inconsistent with a real-valued solution: {0}")]
    InconsistentMeasurements(String),

    #[error("no measurement isolates support index {0}")]
    MissingSingleton(usize),

    #[error("phase graph over the support is disconnected")]
    GraphDisconnected,

    #[error("phase system for edge ({0}, {1}) is singular")]
    DegenerateSystem(usize, usize),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
}

pub type Result<T> = std::result::Result<T, Error>;
