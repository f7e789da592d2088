//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Values are recorded on a [`Tape`] as the forward pass runs; every
//! primitive is a method on [`Var`]. Reductions run in a fixed sequential
//! order so identical inputs give bit-identical results.

pub mod error;
pub mod gradcheck;
pub mod ops;
mod scalar;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use scalar::{DType, Scalar};
pub use tape::{Backward, BackwardCtx, NodeId, Tape, Var};
pub use tensor::Tensor;
