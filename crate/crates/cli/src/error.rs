use std::path::PathBuf;

use thiserror::Error;
use workbench_core::workbench;
use workbench_service::{ApiError, Failure, ServeError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Workbench(#[from] workbench::Error),

    #[error(transparent)]
    Serve(#[from] ServeError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage errors exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// The same error body the service would return for this failure.
    pub fn api_error(self) -> ApiError {
        let plain = |code: &str, message: String| ApiError {
            code: code.to_string(),
            message,
            details: None,
        };
        match self {
            CliError::Workbench(e) => Failure::from(e).body,
            CliError::Serve(ServeError::Workbench(e)) => Failure::from(e).body,
            CliError::Serve(e) => plain(e.code(), e.to_string()),
            e @ CliError::Usage(_) => plain("usage", e.to_string()),
            e @ CliError::Config(_) => plain("invalid-config", e.to_string()),
            e @ CliError::Io { .. } => plain("io", e.to_string()),
        }
    }
}
