use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch at index {index}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e}")]
    NotPsd { eigenvalue: f64 },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("all tail bins are empty; supply the noise floor explicitly (`schedule.noise_floor`)")]
    EmptyTail,

    #[error("no spectrum bins beyond cutoff {cutoff}; conditional covariance undefined")]
    EmptyHighFrequency { cutoff: f64 },

    #[error("noise level must be positive for this operation (got {sigma})")]
    ZeroNoise { sigma: f64 },

    #[error("operator has an empty measurement space")]
    EmptyMeasurement,

    #[error("gradient norm vanishes; descent angle undefined")]
    UndefinedAngle,

    #[error("ground truth unavailable; optimal weights need x*")]
    OracleUnavailable,

    #[error("degenerate operator: spectral norm estimate {0:e}")]
    DegenerateOperator(f64),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("array file: bad magic")]
    BadMagic,

    #[error("array file: unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("array file: unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("array file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("PGM: {0}")]
    Pgm(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("CSV: {0}")]
    Csv(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
