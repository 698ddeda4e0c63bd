//! Small multilayer perceptrons, their optimizers, the learning-rate
//! schedule and parameter checkpoints.

mod checkpoint;
mod mlp;
mod optim;
mod schedule;

pub use checkpoint::Checkpoint;
pub use mlp::{Activation, BoundMlp, Layer, Mlp, INIT_STD};
pub use optim::{collect_grads, Adam, Optimizer, SgdMomentum};
pub use schedule::LrSchedule;

use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("network has no layers")]
    NoLayers,
    #[error("layer {layer}: weight {weight:?} and bias {bias:?} do not form a dense layer")]
    LayerShape {
        layer: usize,
        weight: Vec<usize>,
        bias: Vec<usize>,
    },
    #[error("input width {got} does not match expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("parameter {0} has no gradient; run backward first")]
    MissingGradient(usize),
    #[error("expected {expected} parameter gradients, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("gradient {index} has shape {grad:?} but parameter has {param:?}")]
    GradientShape {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
