//! Dense tensors and a tape-based reverse-mode autodiff engine.
//!
//! Values are row-major [`Tensor`]s. Computations are recorded on a
//! [`Tape`] through [`Var`] handles; [`Tape::backward`] fills the gradients
//! of every leaf created with `requires_grad`.
//!
//! Binary ops broadcast their right operand onto the left one: the rhs
//! shape is right-aligned and each extent must match or be 1.

mod error;
pub mod gradcheck;
pub mod io;
mod ops;
mod scalar;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use ops::{conv1d_reference, conv2d_reference, BinaryKind, OpKind, UnaryKind};
pub use scalar::Scalar;
pub use tape::{Fault, Tape, Var};
pub use tensor::Tensor;
