use std::fmt;

/// A failed command, carrying the process exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input (exit 2).
    Parse(String),
    /// The solver or certificate failed (exit 3).
    Solve(String),
    /// The outer iteration budget ran out; partial artifacts were written (exit 4).
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Solve(_) => 3,
            CliError::Budget(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Solve(m) => write!(f, "solve failed: {m}"),
            CliError::Budget(m) => write!(f, "iteration budget exhausted: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<drosc::Error> for CliError {
    fn from(e: drosc::Error) -> Self {
        match e {
            drosc::Error::Parse(_) | drosc::Error::Io(_) => CliError::Parse(e.to_string()),
            _ => CliError::Solve(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
