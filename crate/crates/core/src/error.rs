use thiserror::Error;

/// Errors surfaced by parsing, configuration, and the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: field `{field}`: {reason}")]
    Parse {
        line: usize,
        field: &'static str,
        reason: String,
    },

    #[error("records not sorted by timestamp (first offending index {0})")]
    Unsorted(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty window has no dominant flow")]
    NoDominantFlow,

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("alert rejected: {0}")]
    InvalidAlert(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
