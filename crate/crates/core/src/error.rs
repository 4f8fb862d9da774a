use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("flow time {0} outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no closed-form endpoint for {0} fields")]
    UnsupportedOracle(&'static str),

    #[error("numerical blowup at step {step}")]
    NumericalBlowup { step: usize },

    #[error("step size {step:e} fell below minimum at t = {t}")]
    StepUnderflow { t: f64, step: f64 },

    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },

    #[error("malformed weight document at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("weight document schema error: {0}")]
    Schema(String),

    #[error("{0}")]
    Contract(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}
