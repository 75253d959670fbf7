use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A privacy or mechanism parameter is outside its domain.
    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input is well-formed but carries no usable signal (constant, all zero, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("{algorithm} did not converge within {iterations} iterations")]
    NotConverged {
        algorithm: &'static str,
        iterations: usize,
    },

    #[error("{format} parse error at offset {offset}: expected {expected}, found {found}")]
    Parse {
        format: &'static str,
        offset: usize,
        expected: String,
        found: String,
    },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn parse(
        format: &'static str,
        offset: usize,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Parse {
            format,
            offset,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
