use thiserror::Error;

/// Errors produced anywhere in the agent stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("simulation diverged at t={time:.3}s: body {body} has non-finite state")]
    SimulationDiverged { time: f64, body: u32 },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("cannot decode action tokens: {0}")]
    Decode(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("illegal token {token} at position {position}")]
    IllegalToken { position: usize, token: u32 },

    #[error("curation infeasible for task {task}: {reason}")]
    CurationInfeasible { task: String, reason: String },

    #[error("consistency violation: {0}")]
    Consistency(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
