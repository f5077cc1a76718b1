use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Array or matrix dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The operation requires a property the input does not have.
    #[error("contract violated: {0}")]
    Contract(String),

    /// A file is not in the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A configuration document is invalid; `field` names the offending key.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// Non-finite values, singular systems or divergence.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) | Error::Shape(_) | Error::Contract(_) | Error::Config { .. } => 2,
            Error::Numeric(_) => 3,
            Error::Format(_) | Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
