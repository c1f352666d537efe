use std::path::PathBuf;

use fofr::FofrError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Input { path: String, message: String },

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] FofrError),
}

impl CliError {
    /// 1 usage, 2 numeric failure, 3 I/O or unreadable input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input { .. } | CliError::Io { .. } => 3,
            CliError::Model(FofrError::Config(_)) => 1,
            CliError::Model(_) => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
