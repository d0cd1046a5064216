use thiserror::Error;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    /// The spectral state construction needs a simple top eigenvalue.
    #[error(
        "top eigenvalue is degenerate (gap {gap:e}); an explicit state decomposition is required"
    )]
    DegenerateState { gap: f64 },

    #[error("structure violation: residue {residue:e} exceeds {tolerance:e}")]
    StructureViolation { residue: f64, tolerance: f64 },

    #[error("cross-check failure in {formula} at angles {angles:?}: deviation {deviation:e}")]
    CrosscheckFailure {
        formula: String,
        angles: Vec<f64>,
        deviation: f64,
    },

    #[error("no catalog constants for {0}; pass s and mu explicitly")]
    NoCatalog(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
