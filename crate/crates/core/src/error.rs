use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution parameters: {0}")]
    ParameterDomain(String),

    #[error("cannot split a stream into zero children")]
    EmptySplit,

    #[error("parameter {name} = {value} outside support {support}")]
    Support {
        name: String,
        value: f64,
        support: String,
    },

    #[error("latent source incompatible with model: {0}")]
    Latent(String),

    #[error("population exceeded cap {cap} after {recorded} recorded time points (theta = {theta:?})")]
    Explosion {
        cap: f64,
        recorded: usize,
        theta: Vec<f64>,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("feature mismatch: {0}")]
    Feature(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{0} is unavailable for this model")]
    Unavailable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
