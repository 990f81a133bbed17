use thiserror::Error;

/// Errors raised across the engine. Variants map onto the CLI exit codes:
/// config problems exit with 2, data problems with 3, numeric failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error in {file}:{line}: {message}")]
    Data {
        file: String,
        line: usize,
        message: String,
    },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn corpus(msg: impl Into<String>) -> Self {
        Error::Corpus(msg.into())
    }

    pub fn data(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// Exit code for the CLI contract: 2 config, 3 data, 4 numeric, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::Data { .. } | Error::Corpus(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Numeric(_) => 4,
            Error::LayoutMismatch(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
