use std::path::PathBuf;

use ccgan_autograd::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("malformed IDX file {path}: {source}")]
    Idx {
        path: PathBuf,
        #[source]
        source: crate::data::IdxError,
    },

    #[error("checkpoint header error: {0}")]
    CheckpointHeader(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint payload error: {0}")]
    CheckpointPayload(String),

    #[error("non-finite {term} at iteration {iteration}: {detail}")]
    NonFiniteLoss {
        term: &'static str,
        iteration: u64,
        detail: String,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
