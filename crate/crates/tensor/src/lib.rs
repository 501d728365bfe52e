//! Dense `f32`/`f64` tensors with a recorded graph for reverse-mode
//! differentiation, plus the convolution, pooling, normalization and
//! attention primitives a U-Net needs.
//!
//! Graph recording is implicit: any op whose inputs track gradients
//! attaches a backward closure to its output. Wrap inference in
//! [`no_grad`] to skip recording and free activations eagerly.

mod error;
mod float;
mod gemm;
pub mod gradcheck;
pub mod init;
pub mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use float::{DType, Float};
pub use tensor::{is_grad_enabled, nan_guard_enabled, no_grad, set_nan_guard, NoGradGuard, Tensor};
