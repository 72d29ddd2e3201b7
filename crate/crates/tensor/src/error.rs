use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op} expects a rank-2 tensor, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("masked softmax row {row} has every entry masked")]
    FullyMaskedRow { row: usize },
    #[error("row index {index} out of range for {rows} rows in {op}")]
    RowIndex { op: &'static str, index: usize, rows: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0} needs at least one input")]
    EmptyInput(&'static str),
    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
