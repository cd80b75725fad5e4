use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("backend error on `{endpoint}` after {attempts} attempt(s): {message}")]
    Backend {
        endpoint: String,
        attempts: u32,
        message: String,
    },

    #[error("protocol error on `{endpoint}`: {message}")]
    Protocol { endpoint: String, message: String },

    #[error("{path}:{line}: {message}")]
    TraceLoad {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("engine stopped")]
    EngineStopped,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn backend(endpoint: impl Into<String>, attempts: u32, message: impl Into<String>) -> Self {
        Error::Backend {
            endpoint: endpoint.into(),
            attempts,
            message: message.into(),
        }
    }

    /// Attach context (e.g. a chunk span) to a backend failure. Other errors pass through.
    pub fn with_context(self, context: &str) -> Self {
        match self {
            Error::Backend {
                endpoint,
                attempts,
                message,
            } => Error::Backend {
                endpoint,
                attempts,
                message: format!("{message} ({context})"),
            },
            other => other,
        }
    }

    pub fn is_backend(&self) -> bool {
        matches!(self, Error::Backend { .. } | Error::Protocol { .. })
    }

    /// Process exit code used by the CLI: 2 for input errors, 3 for backend errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend { .. } | Error::Protocol { .. } => 3,
            Error::EngineStopped => 1,
            _ => 2,
        }
    }
}
