use thiserror::Error;

/// Errors raised anywhere in the lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: expected {expected}, got {found}")]
    GridMismatch { expected: String, found: String },

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field has nonzero spatial average {mean:e}; prior energy is infinite")]
    NonZeroMean { mean: f64 },

    #[error("value {value} outside admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("linear solver failed at step {step}: {reason}")]
    SolverFailure { step: usize, reason: String },

    #[error("time step {dt:e} s exceeds the CFL bound {bound:e} s")]
    CflViolation { dt: f64, bound: f64 },

    #[error("saturation {value} left [{lo}, {hi}] by more than the guard")]
    SaturationBounds { value: f64, lo: f64, hi: f64 },

    #[error("time {0} does not land on a solver step")]
    TimeNotOnGrid(f64),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("optimizer diverged after {retries} damped retries")]
    Diverged { retries: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
