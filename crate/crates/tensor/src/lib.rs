//! Dense `f64` tensors, a reverse-mode differentiation tape, the Adam
//! optimizer and a versioned binary checkpoint format.
//!
//! All model math runs on row-major rank-2 tensors. Scalars are `[1, 1]`
//! matrices, column vectors `[n, 1]`, row vectors `[1, n]`. The only
//! broadcasting is scalar multiplication and adding a `[1, n]` row to every
//! row of an `[m, n]` matrix.

mod adam;
mod checkpoint;
mod error;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use error::TensorError;
pub use params::{ParamGrads, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
