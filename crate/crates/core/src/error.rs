use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("outside the admissible regime: {0}")]
    Domain(String),
    #[error("numeric failure: {message} (residual {residual:.3e})")]
    NumericFailure { message: String, residual: f64 },
    #[error("state error: {0}")]
    State(String),
    #[error("no convergence: {message} (residual {residual:.3e})")]
    NonConvergence { message: String, residual: f64 },
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
