//! Seeded random streams, latent prior draws and the Gaussian error vector
//! that places second-generator targets near the prototype boundaries.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::geometry::CenterStats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("all prototypes coincide with their mean; the error-vector variance is undefined")]
    DegeneratePrototypes,
    #[error("need at least one class and one feature dimension, got {classes} × {dim}")]
    EmptyDimensions { classes: usize, dim: usize },
    #[error("variance must be finite and non-negative, got {0}")]
    InvalidVariance(f64),
}

/// ChaCha8 stream addressed by a seed plus a list of tags.
///
/// Streams derived from the same seed with different tags are independent,
/// so adding or removing one consumer never shifts another's draws.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(tags.iter().fold(0x9E37_79B9_7F4A_7C15, |h, &t| splitmix64(h ^ t)));
        SeededRng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `batch × latent_dim` draws from the standard normal prior.
pub fn sample_prior(rng: &mut SeededRng, batch: usize, latent_dim: usize) -> Tensor {
    let data = (0..batch * latent_dim).map(|_| rng.standard_normal()).collect();
    Tensor::new(vec![batch, latent_dim], data).expect("length matches shape")
}

/// Per-coordinate variance of the boundary error vector.
///
/// Chosen so that the upper 3σ edge of `‖δx‖² / m`, which is approximately
/// `N(σ², 2σ⁴/m)` for large `m`, lands on the mean prototype distance
/// `d0 / N`: `σ² (1 + 3√(2/m)) = d0 / N`.
pub fn sigma_squared(stats: &CenterStats, classes: usize, dim: usize) -> Result<f64, SamplingError> {
    if classes == 0 || dim == 0 {
        return Err(SamplingError::EmptyDimensions { classes, dim });
    }
    if stats.spread.is_nan() || stats.spread <= 0.0 {
        return Err(SamplingError::DegeneratePrototypes);
    }
    let edge = 1.0 + 3.0 * (2.0 / dim as f64).sqrt();
    Ok(stats.spread / (edge * classes as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorVectorSpec {
    dim: usize,
    sigma2: f64,
}

impl ErrorVectorSpec {
    pub fn new(dim: usize, sigma2: f64) -> Result<Self, SamplingError> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(SamplingError::InvalidVariance(sigma2));
        }
        Ok(ErrorVectorSpec { dim, sigma2 })
    }

    pub fn from_stats(stats: &CenterStats, classes: usize) -> Result<Self, SamplingError> {
        let dim = stats.center.len();
        Self::new(dim, sigma_squared(stats, classes, dim)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// `batch × m` entries i.i.d. `N(0, σ²)`.
pub fn sample_error_vector(rng: &mut SeededRng, spec: &ErrorVectorSpec, batch: usize) -> Tensor {
    let sigma = spec.sigma2.sqrt();
    let data = (0..batch * spec.dim).map(|_| sigma * rng.standard_normal()).collect();
    Tensor::new(vec![batch, spec.dim], data).expect("length matches shape")
}
