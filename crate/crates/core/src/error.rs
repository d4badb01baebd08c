use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = JiveError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum JiveError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed embedding or corpus file. `line` is 1-based.
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("{0}")]
    Argument(String),

    #[error("{0}")]
    Invalid(String),

    #[error("degenerate block: {0}")]
    Degenerate(String),

    #[error("numeric failure at iteration {iteration}: {message}")]
    Numeric { iteration: usize, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl JiveError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JiveError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        JiveError::Argument(message.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            JiveError::Numeric { .. } | JiveError::Degenerate(_) => 3,
            _ => 2,
        }
    }
}
