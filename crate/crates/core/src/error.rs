use std::fmt;

use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The predictor covariance is (numerically) singular, usually because
    /// some predictors are collinear.
    #[error("singular covariance: smallest eigenvalue {min:e} <= {rel_tol:e} x largest eigenvalue {max:e}")]
    SingularCovariance { min: f64, max: f64, rel_tol: f64 },

    #[error("least squares fit requested on an empty bin")]
    EmptyBin,

    #[error("no samples left in the dataset")]
    EmptyDataset,

    #[error("degenerate interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },

    #[error("no admissible bins at level {level}")]
    NoAdmissibleBins { level: u32 },

    #[error("bin {bin} holds {count} samples, at least {needed} required")]
    BinTooSmall {
        bin: usize,
        count: usize,
        needed: usize,
    },

    #[error("slope undefined: only {finite} finite points")]
    SlopeUndefined { finite: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) | Error::Config(_) | Error::InvalidInterval { .. } => {
                ErrorClass::Usage
            }
            Error::EmptyDataset
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::NumericalFailure(_)
            | Error::SingularCovariance { .. }
            | Error::EmptyBin
            | Error::NoAdmissibleBins { .. }
            | Error::BinTooSmall { .. }
            | Error::SlopeUndefined { .. } => ErrorClass::Numerical,
        }
    }
}

/// Non-fatal conditions attached to otherwise valid results.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Warning {
    /// The eigenvalue gap that selects the returned eigenvector fell below
    /// the degeneracy threshold; the vector comes from the canonical
    /// tie-break and is not uniquely determined by the matrix.
    DegenerateSpectrum { gap: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::DegenerateSpectrum { gap } => {
                write!(f, "degenerate spectrum (eigengap {gap:e})")
            }
        }
    }
}
