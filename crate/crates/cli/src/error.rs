use std::path::{Path, PathBuf};

use spinlab_core::distsolver::SolverError;
use spinlab_core::experiment::ExperimentError;
use spinlab_core::geodesic::GeodesicError;
use spinlab_core::reconstruct::ReconstructError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {message}", path.display())]
    BadInput { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// 0 success, 1 validation, 2 I/O, 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::BadInput { .. } => 1,
            CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn bad_input(path: &Path, message: impl ToString) -> Self {
        CliError::BadInput { path: path.to_path_buf(), message: message.to_string() }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ReconstructError> for CliError {
    fn from(e: ReconstructError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<GeodesicError> for CliError {
    fn from(e: GeodesicError) -> Self {
        use GeodesicError::*;
        match e {
            PoleSingular { .. } | PoleGuard { .. } | StepUnderflow { .. } | TooManySteps { .. } | NonFinite => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}
