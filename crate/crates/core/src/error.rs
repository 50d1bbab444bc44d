use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index error: {0}")]
    Index(String),

    /// Malformed input file. `line` is 1-based; 0 when the position is unknown.
    #[error("format error (line {line}): {msg}")]
    Format { line: usize, msg: String },

    #[error("unsupported checkpoint format_version {found} (expected {expected})")]
    Version { found: i64, expected: i64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format { line, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
