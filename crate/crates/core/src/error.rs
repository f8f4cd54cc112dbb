//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-physical dissipator rate {0}")]
    NegativeRate(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("density matrix invariant violated: {0}")]
    InvalidState(String),
    #[error("matrix exponential failed: {0}")]
    Expm(String),
    #[error(
        "Fock truncation violated: top-level population {population:.3e} at t = {time_s:.3e} s; \
         increase fock_dim beyond {fock_dim}"
    )]
    Truncation {
        population: f64,
        time_s: f64,
        fock_dim: usize,
    },
    #[error("degenerate steady state: {0}")]
    DegenerateSteadyState(String),
    #[error("non-identifiable at this point; null direction {0:?}")]
    NonIdentifiable(Vec<f64>),
    #[error("invalid probability {probability} for observable {observable}")]
    InvalidProbability {
        probability: f64,
        observable: String,
    },
    #[error("dataset schema error: {0}")]
    Schema(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("linear algebra error: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
