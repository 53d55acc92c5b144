use std::fmt;

/// Command-line failures, split by exit code: usage errors exit 2,
/// computation and I/O errors exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Computation(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {}", m),
            CliError::Computation(m) => write!(f, "{}", m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rgp_core::Error> for CliError {
    fn from(e: rgp_core::Error) -> Self {
        CliError::Computation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Computation(format!("i/o error: {}", e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Computation(format!("json error: {}", e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
