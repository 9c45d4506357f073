use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),

    #[error("singular diagonal approximation: entry {index} is {value}")]
    SingularApproximation { index: usize, value: f64 },

    #[error("zero diagonal entry in block {block} at row {index}")]
    ZeroDiagonal { block: &'static str, index: usize },

    #[error("inner solver failed ({reason}): residual {residual:e} > required {required:e}")]
    InnerSolverFailure {
        reason: String,
        residual: f64,
        required: f64,
    },

    #[error("inner solve of block {block} failed: {source}")]
    BlockSolveFailure {
        block: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "estimator did not converge after {iterations} iterations (best estimate {estimate:e})"
    )]
    EstimatorNonConvergence { estimate: f64, iterations: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("file not found: {0}")]
    NotFound(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
