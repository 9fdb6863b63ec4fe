use std::path::Path;

use thiserror::Error;

use crate::layer_file::LayerFileError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const INVALID: i32 = 2;
    pub const EQUIVALENCE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config file or geometry.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] sparse_accel_core::Error),
    #[error(transparent)]
    Layer(#[from] LayerFileError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("functional equivalence failed: {0}")]
    Equivalence(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Equivalence(_) => exit::EQUIVALENCE,
            CliError::Input(_) | CliError::Core(_) | CliError::Layer(_) => exit::INVALID,
        }
    }
}
