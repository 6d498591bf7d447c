use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot parse function id `{id}`: {reason}")]
    BadFunctionId { id: String, reason: String },

    #[error("integrand is not finite at node {point:?} (value {value})")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("function `{0}` has no gradient")]
    NoGradient(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("extrapolation did not converge: {0}")]
    Extrapolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
