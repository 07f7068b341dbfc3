use std::fmt;

use pcc::PccError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

/// An error with the process exit code it should produce.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub err: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.err)
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn config_err(msg: impl fmt::Display) -> Failure {
    Failure { code: EXIT_CONFIG, err: anyhow::anyhow!("{msg}") }
}

pub fn data_err(msg: impl fmt::Display) -> Failure {
    Failure { code: EXIT_DATA, err: anyhow::anyhow!("{msg}") }
}

impl From<PccError> for Failure {
    fn from(e: PccError) -> Self {
        let code = match e {
            PccError::Config(_) | PccError::Domain(_) => EXIT_CONFIG,
            PccError::Data(_) | PccError::Dimension { .. } => EXIT_DATA,
            PccError::NotConverged(_) | PccError::Numeric(_) => EXIT_NOT_CONVERGED,
        };
        Failure { code, err: e.into() }
    }
}

/// Attach an exit code and a context message to any error.
pub trait WithCode<T> {
    fn code(self, code: i32, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: i32, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| Failure { code, err: e.into().context(what.to_string()) })
    }
}
