//! Reverse-mode differentiation over a small, fixed op set.
//!
//! Everything is `f64` and single-threaded. A [`Tape`] records the forward pass;
//! [`Tape::backward`] fills gradients for every recorded node. [`Adam`] applies
//! bias-corrected updates to plain [`Tensor`] parameters.

mod adam;
mod tape;
mod tensor;

use alloc::vec::Vec;

pub use adam::Adam;
pub use tape::{Tape, Var, LAYER_NORM_EPS};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: produced a non-finite value")]
    NonFiniteValue { op: &'static str },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
}

#[cfg(test)]
mod tests;
