use std::path::PathBuf;

use stylestroke_tensor::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate resampling: {0}")]
    ResampleDegenerate(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unsupported ONNX op `{op}` (node `{node}`)")]
    UnsupportedOp { op: String, node: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("image decode error: {0}")]
    Decode(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
