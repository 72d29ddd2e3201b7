use std::path::PathBuf;

use thiserror::Error;
use tkgc_core::data::DataError;
use tkgc_core::error::ModelError;
use tkgc_tensor::TensorError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        Self::Checkpoint(e.to_string())
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    /// The message on one line, for the process exit report.
    pub fn one_line(&self) -> String {
        self.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
    }
}
