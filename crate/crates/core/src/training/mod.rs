//! The three training strategies and the radius trajectory they produce.
//!
//! * [`Strategy::Mpf`]: every epoch is one pass minimizing `L_c + λ L_o`.
//! * [`Strategy::Ampf`]: each epoch adds an adversarial loop after the pass,
//!   updating discriminator, generator and classifier per batch.
//! * [`Strategy::AmpfPlusPlus`]: each epoch then repeats the positive pass
//!   and runs a loop driven by the boundary generator.

mod model;
mod procedures;
mod trajectory;

pub use model::TrainedModel;
pub use procedures::{train, train_ampf, train_ampfpp, train_mpf};
pub use trajectory::{
    conformance, epoch_summaries, observed_increments, predicted_increments, Conformance, EpochSummary, LawTally,
    Motion, Phase, Record, TrajectoryLog, CSV_HEADER,
};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::DataError;
use crate::geometry::GeometryError;
use crate::losses::{HyperParams, LossError};
use crate::nets::{LrSchedule, NetError};
use crate::sampling::SamplingError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training aborted at epoch {epoch}, {phase} batch {batch}: {reason}")]
    Aborted {
        epoch: usize,
        phase: Phase,
        batch: usize,
        reason: String,
    },
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Mpf,
    Ampf,
    AmpfPlusPlus,
}

impl Strategy {
    pub fn uses_generator(self) -> bool {
        self != Strategy::Mpf
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Mpf => "mpf",
            Strategy::Ampf => "ampf",
            Strategy::AmpfPlusPlus => "ampfpp",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mpf" => Ok(Strategy::Mpf),
            "ampf" => Ok(Strategy::Ampf),
            "ampfpp" | "ampf++" => Ok(Strategy::AmpfPlusPlus),
            other => Err(format!("unknown strategy `{other}` (expected mpf, ampf or ampfpp)")),
        }
    }
}

/// Adam settings shared by the generators and the discriminator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            lr: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub max_epoch: usize,
    pub batch_size: usize,
    /// Caps every pass at this many batches; `None` uses the whole set.
    pub batches_per_epoch: Option<usize>,
    pub hyper: HyperParams,
    /// Classifier learning-rate schedule (SGD with momentum).
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub adam: AdamSettings,
    pub feature_dim: usize,
    pub hidden: usize,
    pub latent_dim: usize,
    /// Standard deviation of the initial prototype centers.
    pub proto_std: f64,
    pub seed: u64,
    /// Runs the boundary-generator segment of each AMPF++ epoch. Turning it
    /// off reproduces AMPF exactly.
    pub g2_phase: bool,
    /// Fits a per-feature standardizer on the training rows and applies it
    /// to every input the model sees, including at scoring time.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Mpf,
            max_epoch: 30,
            batch_size: 64,
            batches_per_epoch: None,
            hyper: HyperParams::default(),
            schedule: LrSchedule::default(),
            momentum: 0.9,
            adam: AdamSettings::default(),
            feature_dim: 8,
            hidden: 64,
            latent_dim: 32,
            proto_std: 1.0,
            seed: 0,
            g2_phase: true,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::Config(msg));
        for (name, v) in [
            ("max_epoch", self.max_epoch),
            ("batch_size", self.batch_size),
            ("feature_dim", self.feature_dim),
            ("hidden", self.hidden),
            ("latent_dim", self.latent_dim),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.batches_per_epoch == Some(0) {
            return fail("batches_per_epoch must be at least 1".into());
        }
        self.hyper.check_finite()?;
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        let s = &self.schedule;
        if !(s.initial > 0.0 && s.initial.is_finite() && s.factor > 0.0 && s.factor <= 1.0 && s.period >= 1) {
            return fail(format!(
                "learning-rate schedule needs initial > 0, factor in (0, 1] and period ≥ 1; got {} / {} / {}",
                s.initial, s.factor, s.period
            ));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return fail(format!(
                "adam needs lr > 0 and betas in [0, 1); got {} / {} / {}",
                a.lr, a.beta1, a.beta2
            ));
        }
        if !(self.proto_std > 0.0 && self.proto_std.is_finite()) {
            return fail(format!("proto_std must be positive, got {}", self.proto_std));
        }
        Ok(())
    }
}
