use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Math(String),
    #[error("verdicts not all true")]
    Verdict,
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Math(_) => 2,
            CliError::Verdict => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn input(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {e}"))
    }
}

impl From<hardmax::Error> for CliError {
    fn from(e: hardmax::Error) -> Self {
        use hardmax::Error::*;
        match e {
            NotSymmetric(_) | NotPositiveDefinite { .. } => CliError::Math(e.to_string()),
            NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(path, contents).map_err(|e| CliError::input(path.display(), e))
}
