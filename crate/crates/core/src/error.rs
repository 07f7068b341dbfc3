use thiserror::Error;

#[derive(Debug, Error)]
pub enum PccError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("did not converge: {0}")]
    NotConverged(String),
    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PccError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(PccError::Domain(msg.into()))
}
