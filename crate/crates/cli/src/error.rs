use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config or input data; `path` is a dotted field path or `file:line`.
    #[error("validation error at {path}: {reason}")]
    Validation { path: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no data: {0}")]
    NoData(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn validation(path: impl Into<String>, reason: impl ToString) -> Self {
        Self::Validation {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for anything the user can fix in their inputs, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } | Self::NoData(_) => 2,
            Self::Io { .. } => 3,
            Self::Runtime(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
