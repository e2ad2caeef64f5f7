//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A variable index outside `0..num_vars`.
    #[error("unknown variable {0}")]
    UnknownVariable(usize),

    #[error("state {state} out of range for variable {var} with cardinality {cardinality}")]
    StateOutOfRange {
        var: usize,
        state: usize,
        cardinality: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parse error at line {line}, token {token}: {message}")]
    Parse {
        line: usize,
        token: usize,
        message: String,
    },

    /// Evidence or conditioning values with zero probability mass.
    #[error("inconsistent evidence: {0}")]
    Inconsistent(String),

    #[error("model too large for exact inference: {0}")]
    TooLarge(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("proposal error: {0}")]
    Proposal(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("output spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("non-finite loss for batch sample {index}")]
    NonFiniteLoss { index: usize },

    #[error("version mismatch: {0}")]
    Version(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("configuration error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
