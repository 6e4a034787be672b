//! Top-level error with one process exit code per class.

use crate::analysis::AnalysisError;
use crate::config::ConfigError;
use crate::coupling::CouplingError;
use crate::discretization::DiscretizationError;
use crate::evolution::EvolutionError;
use crate::linalg::LinalgError;
use crate::semilinear::SemilinearError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Semilinear(#[from] SemilinearError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VERDICT_FAILED: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const MESH_MISMATCH: i32 = 4;
    pub const NUMERICAL: i32 = 5;
    pub const BLOWUP: i32 = 6;
    pub const IO: i32 = 7;
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(ConfigError::Parse { .. }) | Error::Usage(_) => exit::PARSE,
            Error::Config(ConfigError::Validation { .. }) => exit::VALIDATION,
            Error::Config(ConfigError::Io { .. }) | Error::Io { .. } => exit::IO,
            Error::Analysis(AnalysisError::MeshMismatch) => exit::MESH_MISMATCH,
            Error::Analysis(AnalysisError::Discretization(_)) | Error::Discretization(_) => exit::VALIDATION,
            Error::Semilinear(SemilinearError::Blowup { .. }) => exit::BLOWUP,
            Error::Semilinear(SemilinearError::EdgeCount { .. } | SemilinearError::BadTable) => exit::VALIDATION,
            Error::Coupling(CouplingError::DimensionMismatch(..) | CouplingError::NonSquare { .. }) => exit::VALIDATION,
            _ => exit::NUMERICAL,
        }
    }
}
