use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NlabError>;

#[derive(Debug, Error)]
pub enum NlabError {
    #[error("input shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("ingestion error in {path}: {reason} (byte offset {offset})")]
    Ingestion { path: PathBuf, offset: u64, reason: String },

    #[error("non-finite gradient at epoch {epoch}, batch {batch}, parameter block `{block}`")]
    NonFiniteGradient { epoch: usize, batch: usize, block: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl NlabError {
    pub fn validation(msg: impl Into<String>) -> Self {
        NlabError::Validation(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        NlabError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        NlabError::Csv {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for usage/input problems, 3 for
    /// numeric failures during training.
    pub fn exit_code(&self) -> i32 {
        match self {
            NlabError::NonFiniteGradient { .. } | NlabError::Numeric(_) => 3,
            _ => 2,
        }
    }
}
