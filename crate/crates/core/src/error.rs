use std::path::PathBuf;

/// Errors produced by the gap-crossing stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid config: {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    Shape {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("csv {path}: {reason}")]
    Csv { path: PathBuf, reason: String },

    #[error("physics fault: {0}")]
    PhysicsFault(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
