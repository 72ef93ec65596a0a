use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("autodiff: {0}")]
    Graph(String),

    #[error("unknown family {name:?}; expected one of: {valid}")]
    UnknownFamily { name: String, valid: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: row {row}: {detail}")]
    Manifest { path: PathBuf, row: usize, detail: String },

    #[error("{path}: {detail}")]
    Decode { path: PathBuf, detail: String },

    #[error("split: {0}")]
    Split(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("run record: {0}")]
    Record(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
