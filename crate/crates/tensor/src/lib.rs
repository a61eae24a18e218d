//! Dense f32 tensors with a reverse-mode gradient tape.
//!
//! Values live in [`Tensor`]; differentiable computation goes through
//! [`Var`] handles recorded on a [`Tape`]. Forward kernels are deterministic
//! for a given input regardless of the rayon pool size: parallel work is
//! split per output element or per plane, and reductions use a fixed-order
//! pairwise tree.

mod error;
pub mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use ops::{Conv2dParams, Pool2dParams};
pub use tape::{BackwardFn, Gradients, NodeId, Tape, Var};
pub use tensor::{broadcast_shape, numel, pairwise_sum, strides, Tensor};
