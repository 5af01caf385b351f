use std::path::PathBuf;

/// Errors produced by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("face {face} references vertex {index}, but only {count} vertices exist")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("surface has zero total area")]
    ZeroArea,
    #[error("subdivision needs more than {budget} vertices")]
    VertexBudgetExceeded { budget: usize },
    #[error("point cloud has {size} points, above the exact solver cap of {cap}; subsample first")]
    SolverCapExceeded { size: usize, cap: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Broad category of the failure, used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. } | Error::Io(_) | Error::Json(_) | Error::InvalidArgument(_) => {
                ErrorCategory::Input
            }
            Error::IndexOutOfRange { .. } => ErrorCategory::Input,
            Error::InvalidMesh(_)
            | Error::DimensionMismatch(_)
            | Error::ZeroArea
            | Error::VertexBudgetExceeded { .. }
            | Error::SolverCapExceeded { .. } => ErrorCategory::Shape,
            Error::NonFinite(_) => ErrorCategory::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Shape,
    Numerical,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
