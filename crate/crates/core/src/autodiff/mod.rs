//! Tape-based reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is built fresh for every optimization step: parameters enter
//! as tracked leaves via [`Graph::param`], data as [`Graph::constant`], and
//! a single [`Graph::backward`] call fills in the gradients.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::gradient_error;
pub use graph::{Graph, Var, LOG_CLAMP};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data of length {len} does not fit shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("graph already consumed by a backward pass")]
    GraphConsumed,
    #[error("{op}: axis {axis} is invalid for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
}
