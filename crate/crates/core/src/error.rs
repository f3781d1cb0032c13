use thiserror::Error;

/// Errors raised by the calibration and diagnostics routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NssError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular triangular block at diagonal index {index} (value {value:e})")]
    SingularRecovery { index: usize, value: f64 },

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("finite-difference step invalid: |lambda1 - lambda2| = {separation:e} is below {required:e}")]
    StepValidity { separation: f64, required: f64 },

    #[error("weak identification: Schur complement is singular (cond = {cond:e})")]
    WeakIdentification { cond: f64 },

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, NssError>;

impl From<std::io::Error> for NssError {
    fn from(e: std::io::Error) -> Self {
        NssError::Io(e.to_string())
    }
}

impl From<csv::Error> for NssError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        NssError::Parse {
            line,
            message: e.to_string(),
        }
    }
}
