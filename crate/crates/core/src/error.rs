use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CanError>;

#[derive(Debug, Error)]
pub enum CanError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CanError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        CanError::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CanError::Config(msg.into())
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            CanError::Config(_) | CanError::Version { .. } => 2,
            CanError::Divergence { .. } => 3,
            _ => 1,
        }
    }
}
