use std::path::PathBuf;

/// Errors surfaced by parsing, validation, training and model I/O.
#[derive(Debug, thiserror::Error)]
pub enum LtrError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    // The io error is part of the message rather than a `source()` link, so
    // wrappers that print error chains do not repeat it.
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl LtrError {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        LtrError::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        LtrError::Validation(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        LtrError::Io {
            path: path.into(),
            cause,
        }
    }
}

pub type Result<T> = std::result::Result<T, LtrError>;
