//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the pipeline.
///
/// Variants map onto the CLI exit-code classes: configuration and contract
/// problems are validation errors, bad or missing inputs are data errors,
/// and non-finite losses are numeric failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("state error: {0}")]
    State(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Exit-code class used by the CLI: 1 validation, 2 data, 3 numeric.
    pub fn exit_class(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            Error::Data(_) | Error::Input(_) | Error::Io(_) | Error::Parse(_) => 2,
            _ => 1,
        }
    }
}
