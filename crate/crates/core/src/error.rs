use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unstable explicit scheme: {name} = {ratio} exceeds {limit}")]
    Stability {
        name: &'static str,
        ratio: f64,
        limit: f64,
    },

    #[error("sample is not leptokurtic (excess kurtosis {excess_kurtosis}); use the normal model")]
    NotLeptokurtic { excess_kurtosis: f64 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
