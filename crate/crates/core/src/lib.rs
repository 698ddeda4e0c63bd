//! Prototype-based open-set recognition with a learnable margin radius,
//! adversarially generated unknowns and a boundary-sampling generator.
//!
//! The crate is self-contained: [`autodiff`] supplies the gradients,
//! [`nets`] the small networks and optimizers, and [`training`] the three
//! training strategies built on the objectives in [`losses`].

pub mod autodiff;
pub mod data;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod sampling;
pub mod training;

pub use autodiff::{Graph, Tensor, Var};
pub use data::{GaussianSpec, LabeledSet, OpenSplit};
pub use geometry::{CenterStats, PrototypeSet};
pub use losses::{HyperParams, LossBreakdown};
pub use metrics::{MetricsReport, ScoredSample};
pub use nets::{Adam, LrSchedule, Mlp, SgdMomentum};
pub use sampling::{ErrorVectorSpec, SeededRng};
pub use training::{Strategy, TrainConfig, TrainedModel, TrajectoryLog};
