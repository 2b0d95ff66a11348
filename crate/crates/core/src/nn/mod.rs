//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Feature maps are `(channels, height, width)`; matrices are `(rows, cols)`.
//! The graph processes one sample at a time; batches are handled by the
//! caller, one graph per sample.

mod graph;
pub mod kernels;
mod tensor;

pub use graph::{Gradients, Graph, Var, VAR_EPS};
pub use tensor::Tensor;
