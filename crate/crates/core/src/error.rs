use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An invalid construction parameter or experiment setting.
    #[error("config error: {0}")]
    Config(String),
    /// The request exceeds what an exact oracle can materialize.
    #[error("capability error: {0}")]
    Capability(String),
    /// The state has zero probability under the path marginal.
    #[error("unreachable state {state:?} at t = {t}")]
    Unreachable { t: f64, state: Vec<usize> },
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An internal sampler invariant was violated.
    #[error("sampler invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
