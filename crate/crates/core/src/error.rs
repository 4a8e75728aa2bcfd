use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("field does not match graph: {0}")]
    Mismatch(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("invalid rule: {0}")]
    Rule(String),

    #[error("invalid path: {0}")]
    Path(String),

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
