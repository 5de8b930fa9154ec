use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("construction failed: {0}")]
    ConstructionFailure(String),

    #[error("energy causality violated: consumption {consumed} exceeds battery {battery} (quanta)")]
    CausalityViolation { consumed: usize, battery: usize },

    #[error("problem too large: {what} needs {entries} entries, budget is {budget}")]
    TooLarge {
        what: String,
        entries: u128,
        budget: u128,
    },

    #[error("policy selects an infeasible action at slot {slot}, state {state}, device {device}")]
    PolicyInfeasible {
        slot: usize,
        state: usize,
        device: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
