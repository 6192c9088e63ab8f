use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("token configuration must contain at least one token")]
    EmptyConfiguration,
    #[error("token index {index} out of range for {n} tokens")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("operation requires {0} attention")]
    WrongMode(&'static str),
    #[error("leader {token} detected at step {detected} lost its singleton attention set at step {step}")]
    PersistenceViolation { token: usize, detected: usize, step: usize },
    #[error("trajectory did not converge")]
    NotConverged,
    #[error("cluster representatives {first} and {second} are {distance:e} apart (radius too coarse)")]
    AmbiguousClustering { first: usize, second: usize, distance: f64 },
    #[error("projection system is singular (affinely dependent face)")]
    SingularSystem,
    #[error("a face needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss in batch {batch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
