//! The 1-D CNN text classifier and the small engine it runs on.
//!
//! There is no general autograd here: each layer op has an explicit forward
//! and backward function, and [`model`] wires them into the fixed stack
//!
//! ```text
//! embedding
//! -> conv1d(128, k=5) -> relu -> maxpool -> dropout
//! -> conv1d(256, k=5) -> relu -> maxpool -> dropout
//! -> flatten -> dense(128) -> relu -> dropout -> dense(64) -> relu
//! -> dense(1) -> sigmoid
//! ```
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

pub mod adam;
pub mod checkpoint;
pub mod model;
pub mod ops;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointError};
pub use model::{init_params, ForwardPass, Mode, ModelConfig, Parameters};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence length {len} is shorter than the kernel size {kernel}")]
    TooShortForKernel { len: usize, kernel: usize },
    #[error("spatial length {len} is shorter than the pool size {pool}")]
    TooShortForPool { len: usize, pool: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
