use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semidefinite (most negative eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("field evaluation failed: {0}")]
    EvaluationFailure(String),

    #[error("geodesic integration failed: {0}")]
    GeodesicFailure(String),

    #[error("trace of the matrix is zero; ratio is undefined")]
    DegenerateTrace,

    #[error("stochastic integration became unstable at step {step}")]
    IntegrationUnstable { step: usize },

    #[error("training diverged at step {step} (non-finite loss)")]
    DivergedTraining { step: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
