use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
#[non_exhaustive]
pub enum Error {
    /// A parameter violated its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A value fell outside the representable or permitted range.
    #[error("value {value} outside permitted range [{low}, {high}]")]
    Range { value: f64, low: f64, high: f64 },

    /// A client submitted more pairs than allowed or repeated a key.
    #[error("invalid client {client}: {reason}")]
    InvalidClient { client: String, reason: String },

    /// A holder failed to contribute to an opening.
    #[error("protocol stalled: holder {holder} did not contribute")]
    Stall { holder: usize },

    /// Generic runtime protocol failure (mismatched holder sets, triple reuse).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Line-oriented input could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Bytes could not be decoded into a wire object.
    #[error("decode error: {0}")]
    Decode(String),

    /// Configuration error.
    #[error("config error: {0}")]
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

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
