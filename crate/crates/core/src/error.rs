use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid signal spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("value out of fixed-point range: {0}")]
    Range(String),

    #[error("no bins above threshold")]
    EmptySupport,

    #[error("underdetermined system: {cols} detected bins but only {rows} measurements")]
    Underdetermined { rows: usize, cols: usize },

    #[error("normal matrix is numerically singular (min/max R diagonal = {ratio:e})")]
    Singular { ratio: f64 },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("malformed CSV: {0}")]
    Csv(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
