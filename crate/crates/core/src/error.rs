use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("corrupt data: {0}")]
    CorruptData(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("cascade parse error: {0}")]
    Parse(String),
    #[error("unsupported cascade: {0}")]
    UnsupportedCascade(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("image decode error on {path}: {message}")]
    Decode { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
