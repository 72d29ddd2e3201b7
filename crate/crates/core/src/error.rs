use thiserror::Error;
use tkgc_tensor::TensorError;

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("ComplEx needs an even embedding dimension, got {0}")]
    OddDimension(usize),
    #[error("query has no negative candidates")]
    NoNegatives,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: String, epoch: usize },
    #[error("checkpoint does not match the model: {0}")]
    CheckpointMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
