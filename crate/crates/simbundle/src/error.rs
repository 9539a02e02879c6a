use thiserror::Error;

/// Errors surfaced by the solver and its helpers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("oracle returned a non-finite entry at index {index}")]
    OracleFailure { index: usize },

    #[error("point outside bounds at coordinate {index} (value {value}, bounds [{lower}, {upper}])")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("QP solver breakdown: {0}")]
    SolverBreakdown(String),

    #[error("line search exhausted at beta={beta:e} (floor {floor:e}): {detail}")]
    BacktrackExhausted { beta: f64, floor: f64, detail: String },

    #[error("penalty update exceeded {iterations} iterations (pi={pi:e}, delta_f={delta_f:e})")]
    LoopGuard {
        iterations: usize,
        pi: f64,
        delta_f: f64,
    },

    #[error("inner solve failed: {0}")]
    InnerSolveFailure(String),

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
