//! Library side of the `mdro` command-line tool: configuration handling,
//! CSV and model-file I/O, cross-validation and the scripted experiments.
//! The binary in `main.rs` is a thin clap front end over these pieces.

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod experiment;
pub mod repro;

use std::path::PathBuf;

use mdro::DroError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] DroError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 0 success, 1 runtime/numeric failure, 2 usage/IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Parse { .. } => 2,
            CliError::Runtime(_) => 1,
            CliError::Core(e) => match e {
                DroError::Diverged { .. } | DroError::NonFinite(_) | DroError::NotPsd(_) => 1,
                _ => 2,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
