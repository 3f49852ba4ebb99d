use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] hbac_core::Error),

    #[error("check failed: {0}")]
    Assertion(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 2 for bad input, 3 for a failed numerical check, 1 for I/O trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) | HarnessError::Core(_) => 2,
            HarnessError::Assertion(_) => 3,
            HarnessError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}
