use thiserror::Error;

/// Errors raised by the solver toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (smallest eigenvalue of symmetric part {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("iteration limit exceeded (best residual {best_residual:.3e})")]
    IterationLimit { best_residual: f64 },

    #[error("brute-force enumeration supports m <= 12, got m = {0}")]
    TooLarge(usize),

    #[error("point ({y}, {w}) at index {index} is not complementary")]
    NonComplementary { index: usize, y: f64, w: f64 },

    #[error("point lies outside the domain box: {0}")]
    OutsideDomain(String),

    #[error("ambiguity set is empty: {0}")]
    EmptySet(String),

    #[error("projection did not converge (final infeasibility {infeasibility:.3e})")]
    ProjectionNotConverged { infeasibility: f64 },

    #[error("transport linear program failed: {0}")]
    Transport(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
