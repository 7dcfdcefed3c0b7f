//! Library half of the `vaflow` binary: experiment specs, the experiment
//! registry, and the CSV/SVG emitters the experiments write their results
//! through.

pub mod experiments;
pub mod spec;
pub mod svg;
pub mod trace;

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown experiment {0:?} (run `vaflow list` for the available names)")]
    UnknownExperiment(String),

    #[error("{0}")]
    Usage(String),

    #[error("experiment failed; details in {manifest}", manifest = .manifest.display())]
    RunFailed { manifest: PathBuf },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("could not parse config: {0}")]
    Config(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: usage problems are 2, run failures are 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownExperiment(_) | CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::RunFailed { .. } | CliError::Io(_) => 1,
        }
    }
}
