use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid hyperboloid point: {0}")]
    InvalidPoint(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("wrong parity: {0}")]
    Parity(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e} after {panels} panels)")]
    Accuracy {
        requested: f64,
        achieved: f64,
        panels: usize,
    },
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("time-range error: {0}")]
    TimeRange(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("inadmissible Strichartz pair: {0}")]
    Pair(String),
    #[error("undefined ratio: {0}")]
    Undefined(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
