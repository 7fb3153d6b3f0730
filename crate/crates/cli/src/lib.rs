//! Operational shell around `abm-calib-core`: configuration, run artifacts
//! and the `init | calibrate | evaluate | pareto | report` commands.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use abm_calib_core::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE_CAP: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration problems:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("{0}")]
    FailureCap(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::FailureCap(_) => EXIT_FAILURE_CAP,
            CliError::Io { .. } => EXIT_IO,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { path, source } => CliError::Io { path, source },
            CoreError::FailureCap { .. } => CliError::FailureCap(e.to_string()),
            CoreError::InvalidInput(_) | CoreError::DimensionMismatch { .. } | CoreError::Parse { .. } => {
                CliError::Config(vec![e.to_string()])
            }
            other => CliError::Other(other.to_string()),
        }
    }
}
