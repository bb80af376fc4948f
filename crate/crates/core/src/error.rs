use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite value in layer {layer}: {what}")]
    Numeric { layer: usize, what: String },

    #[error("state encoding error: {0}")]
    Encoding(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported environment: {0}")]
    Unsupported(String),

    #[error("episode already finished; reset before stepping")]
    EpisodeFinished,

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("not found: {0}")]
    NotFound(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Numeric { .. } => "numeric",
            Error::Encoding(_) => "encoding",
            Error::InvalidInput(_) => "invalid_input",
            Error::Unsupported(_) => "unsupported",
            Error::EpisodeFinished => "episode_finished",
            Error::Iteration { source, .. } => source.kind(),
            Error::Parse { .. } => "parse",
            Error::NotFound(_) => "not_found",
            Error::Io { .. } => "io",
        }
    }
}
