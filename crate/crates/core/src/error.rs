use thiserror::Error;

/// Failure modes shared across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported degree {0}")]
    UnsupportedDegree(usize),
    #[error("inverted element in cell {cell:?} (J = {j})")]
    InvertedElement { cell: Option<usize>, j: f64 },
    #[error("volume fraction violation in cell {cell:?} (J = {j}, xi = {xi})")]
    VolumeFractionViolation { cell: Option<usize>, j: f64, xi: f64 },
    #[error("assembly failure in cell {cell}: {reason}")]
    AssemblyFailure { cell: usize, reason: String },
    #[error("projection failure: {0}")]
    ProjectionFailure(String),
    #[error("linear solve failed: {0}")]
    LinearSolveSingular(String),
    #[error("newton did not converge in {iterations} iterations (residual {residual:e})")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },
    #[error("startup error: {0}")]
    Startup(String),
    #[error("config error at line {line} key `{key}`: {reason}")]
    Config { key: String, line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Attaches a cell index to kinematic errors raised at the pointwise level.
    pub fn in_cell(self, cell: usize) -> Self {
        match self {
            Error::InvertedElement { j, .. } => Error::InvertedElement { cell: Some(cell), j },
            Error::VolumeFractionViolation { j, xi, .. } => Error::VolumeFractionViolation { cell: Some(cell), j, xi },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
