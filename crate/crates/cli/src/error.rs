use std::io;
use std::path::PathBuf;

use thiserror::Error;
use weakinfo::{MarketError, MeasureError, SolverError, UtilityError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },
    #[error("model is not admissible: {0}")]
    Market(#[from] MarketError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid anticipation: {0}")]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    /// 1 for I/O, 2 for configuration, 3 for non-convergence, 4 for an
    /// inadmissible model or solver input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Read { .. } | CliError::Write { .. } => 1,
            CliError::Config { .. } => 2,
            CliError::Solver(SolverError::NoConvergence { .. } | SolverError::Bracketing { .. }) => 3,
            CliError::Market(_) | CliError::Solver(_) | CliError::Measure(_) | CliError::Utility(_) => 4,
        }
    }
}
