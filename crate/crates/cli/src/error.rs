use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit status for data and I/O errors.
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bellrm_core::Error),

    #[error("cannot parse configuration {path}: {source}")]
    ConfigParse { path: PathBuf, source: serde_json::Error },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("missing input files: {}", .0.join(", "))]
    Missing(Vec<String>),

    #[error("output directory {0} is locked by another invocation")]
    Locked(PathBuf),

    #[error("malformed {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_config() => EXIT_CONFIG,
            CliError::ConfigParse { .. } => EXIT_CONFIG,
            _ => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
