use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An entry lies outside the domain of the function being applied.
    #[error("domain error at ({row}, {col}): {value} is outside the domain of {what}")]
    Domain {
        row: usize,
        col: usize,
        value: f64,
        what: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("all {} starts failed: {}", .0.len(), .0.join("; "))]
    AllStartsFailed(Vec<String>),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn shape_err(what: &str, expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::Shape(format!(
        "{what}: expected {}x{}, got {}x{}",
        expected.0, expected.1, got.0, got.1
    ))
}
