//! The `s2m` command line: dataset generation, pipeline runs, evaluation,
//! threshold sweeps and a local JSON server for the annotation tool.

pub mod commands;
pub mod config;
pub mod serve;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read input {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),

    #[error("no shapes found in {0}")]
    NoShapes(PathBuf),

    #[error(transparent)]
    Core(#[from] mobility_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
