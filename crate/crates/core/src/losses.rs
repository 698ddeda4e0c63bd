//! Scalar objectives built on a [`Graph`]: prototype classification, the
//! margin constraint on the radius, the far-region term that pushes
//! generated features out past `κR`, and the generator/discriminator losses.
//!
//! Every per-sample term is averaged over the batch. Labels are 1-based
//! class ids, matching [`crate::data::LabeledSet`].

use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::geometry::{BoundPrototypes, PrototypeSet};

/// Discriminator outputs are clamped into `[DISC_CLAMP, 1 − DISC_CLAMP]` before the log.
pub const DISC_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("label {label} is outside 1..={classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("λ = {lambda} is not below β·γ·ln 3 = {bound}; the radius would never contract")]
    NoNegativeMotion { lambda: f64, bound: f64 },
    #[error("feature width {got} does not match prototype dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Loss weights: `λ` on the margin term, `α` on the generator's far-region
/// term, `β` on the classifier's far-region term and the offset `γ` in `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda: 0.1,
            alpha: 0.1,
            beta: 0.1,
            gamma: 10.0,
        }
    }
}

impl HyperParams {
    /// Strict check used for user configuration.
    ///
    /// Since `d0 ≥ 0` and `ln(t + 3) ≥ ln 3`, every scheduled `κ` is at least
    /// `γ ln 3`, so `λ < β γ ln 3` guarantees `λ − βκ < 0` on every step.
    pub fn validate(&self) -> Result<(), LossError> {
        let unit = |name, value: f64| {
            if value > 0.0 && value < 1.0 {
                Ok(())
            } else {
                Err(LossError::OutOfRange {
                    name,
                    value,
                    range: "(0, 1)",
                })
            }
        };
        unit("lambda", self.lambda)?;
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(LossError::OutOfRange {
                name: "gamma",
                value: self.gamma,
                range: "[1, ∞)",
            });
        }
        let bound = self.beta * self.gamma * 3f64.ln();
        if self.lambda >= bound {
            return Err(LossError::NoNegativeMotion {
                lambda: self.lambda,
                bound,
            });
        }
        Ok(())
    }

    /// Loose check used by the training loops: finite and non-negative,
    /// so ablations such as `λ = 0` or `β = 0` stay expressible.
    pub fn check_finite(&self) -> Result<(), LossError> {
        for (name, value) in [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(LossError::OutOfRange {
                    name,
                    value,
                    range: "[0, ∞)",
                });
            }
        }
        Ok(())
    }
}

/// Batch-mean hinge and the fraction of samples on its active side.
#[derive(Debug, Clone, Copy)]
pub struct Hinge {
    pub value: Var,
    pub active: f64,
}

/// Scalar values of one objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub lc: f64,
    pub lo: f64,
    pub j: f64,
    pub total: f64,
    pub lo_active: f64,
    pub j_active: f64,
}

/// A composite loss node together with its component values.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

fn class_indices(labels: &[usize], classes: usize) -> Result<Vec<usize>, LossError> {
    labels
        .iter()
        .map(|&label| {
            if label >= 1 && label <= classes {
                Ok(label - 1)
            } else {
                Err(LossError::LabelOutOfRange { label, classes })
            }
        })
        .collect()
}

fn feature_dim(g: &Graph, features: Var, centers: Var) -> Result<usize, LossError> {
    let expected = g.shape(centers)[1];
    let got = g.shape(features).get(1).copied().unwrap_or(0);
    if g.shape(features).len() != 2 || got != expected {
        return Err(LossError::DimMismatch { expected, got });
    }
    Ok(expected)
}

/// Hybrid distance from each feature row to each prototype, `B × N`.
pub fn hybrid_distances(g: &mut Graph, features: Var, centers: Var) -> Result<Var, LossError> {
    let m = feature_dim(g, features, centers)? as f64;
    let ct = g.transpose(centers)?;
    let dots = g.matmul(features, ct)?;
    let f2 = g.square(features)?;
    let ff = g.sum_axis(f2, 1)?;
    let c2 = g.square(centers)?;
    let cc = g.sum_axis(c2, 1)?;
    let cc = g.transpose(cc)?;
    let norms = g.add(ff, cc)?;
    let cross = g.scale(dots, 2.0)?;
    let de = g.sub(norms, cross)?;
    let de = g.scale(de, 1.0 / m)?;
    Ok(g.sub(de, dots)?)
}

/// Row-wise `softmax(−d)` over the prototypes, `B × N`.
pub fn class_prob(g: &mut Graph, features: Var, protos: &BoundPrototypes) -> Result<Var, LossError> {
    let d = hybrid_distances(g, features, protos.centers)?;
    let logits = g.neg(d)?;
    Ok(g.softmax(logits, 1)?)
}

/// [`class_prob`] on plain values.
pub fn class_prob_values(features: &Tensor, protos: &PrototypeSet) -> Result<Tensor, LossError> {
    let mut g = Graph::new();
    let p = protos.bind(&mut g, false);
    let f = g.constant(features.clone());
    let probs = class_prob(&mut g, f, &p)?;
    Ok(g.value(probs).clone())
}

/// Mean negative log-probability of the true class.
pub fn loss_lc(g: &mut Graph, features: Var, labels: &[usize], protos: &BoundPrototypes) -> Result<Var, LossError> {
    let idx = class_indices(labels, g.shape(protos.centers)[0])?;
    let p = class_prob(g, features, protos)?;
    let picked = g.pick(p, &idx)?;
    let logp = g.log(picked)?;
    let mean = g.mean(logp)?;
    Ok(g.neg(mean)?)
}

/// `d_e` from each row of `features` to the matching row of `targets`, shape `B × 1`.
fn row_dist_e(g: &mut Graph, features: Var, targets: Var) -> Result<Var, LossError> {
    let m = g.shape(features)[1] as f64;
    let diff = g.sub(features, targets)?;
    let sq = g.square(diff)?;
    let s = g.sum_axis(sq, 1)?;
    Ok(g.scale(s, 1.0 / m)?)
}

fn mean_hinge(g: &mut Graph, margin: Var) -> Result<Hinge, LossError> {
    let m = g.value(margin);
    let active = m.data().iter().filter(|&&v| v > 0.0).count() as f64 / m.len() as f64;
    let h = g.max_scalar(margin, 0.0)?;
    Ok(Hinge {
        value: g.mean(h)?,
        active,
    })
}

/// Margin constraint: mean of `max(0, d_e(f, O^y) − R)` against each
/// sample's own class prototype.
pub fn loss_lo(g: &mut Graph, features: Var, labels: &[usize], protos: &BoundPrototypes) -> Result<Hinge, LossError> {
    feature_dim(g, features, protos.centers)?;
    let idx = class_indices(labels, g.shape(protos.centers)[0])?;
    let own = g.gather_rows(protos.centers, &idx)?;
    let de = row_dist_e(g, features, own)?;
    let margin = g.sub(de, protos.radius)?;
    mean_hinge(g, margin)
}

/// `L = L_c + λ L_o`.
pub fn loss_mpf(
    g: &mut Graph,
    features: Var,
    labels: &[usize],
    protos: &BoundPrototypes,
    h: &HyperParams,
) -> Result<Objective, LossError> {
    let lc = loss_lc(g, features, labels, protos)?;
    let lo = loss_lo(g, features, labels, protos)?;
    let weighted = g.scale(lo.value, h.lambda)?;
    let total = g.add(lc, weighted)?;
    Ok(Objective {
        total,
        breakdown: LossBreakdown {
            lc: g.scalar(lc),
            lo: g.scalar(lo.value),
            total: g.scalar(total),
            lo_active: lo.active,
            ..LossBreakdown::default()
        },
    })
}

/// Far-region term: mean of `max(0, κR − d_e(f, O_c))` over generated features.
///
/// The center `O_c` and `κ` enter as constants of the step.
pub fn loss_j(g: &mut Graph, gen_features: Var, center: &[f64], kappa: f64, radius: Var) -> Result<Hinge, LossError> {
    let got = g.shape(gen_features).get(1).copied().unwrap_or(0);
    if g.shape(gen_features).len() != 2 || got != center.len() {
        return Err(LossError::DimMismatch {
            expected: center.len(),
            got,
        });
    }
    let c = g.constant(Tensor::new(vec![1, center.len()], center.to_vec())?);
    let de = row_dist_e(g, gen_features, c)?;
    let edge = g.scale(radius, kappa)?;
    let margin = g.sub(edge, de)?;
    mean_hinge(g, margin)
}

fn clamped_log(g: &mut Graph, scores: Var) -> Result<Var, LossError> {
    let s = g.clamp(scores, DISC_CLAMP, 1.0 - DISC_CLAMP)?;
    Ok(g.log(s)?)
}

/// Discriminator loss `−mean log D(x) − mean log(1 − D(G(z)))`.
pub fn loss_disc(g: &mut Graph, real_scores: Var, fake_scores: Var) -> Result<Var, LossError> {
    let real = clamped_log(g, real_scores)?;
    let real = g.mean(real)?;
    let flipped = g.neg(fake_scores)?;
    let flipped = g.add_scalar(flipped, 1.0)?;
    let fake = clamped_log(g, flipped)?;
    let fake = g.mean(fake)?;
    let sum = g.add(real, fake)?;
    Ok(g.neg(sum)?)
}

/// Generator loss `−mean log D(G(z)) + α J`.
pub fn loss_gen_ampf(g: &mut Graph, fake_scores: Var, j_term: Var, alpha: f64) -> Result<Var, LossError> {
    let l = clamped_log(g, fake_scores)?;
    let l = g.mean(l)?;
    let adv = g.neg(l)?;
    let far = g.scale(j_term, alpha)?;
    Ok(g.add(adv, far)?)
}

/// Squared error between generated features and their boundary targets,
/// averaged over every coordinate.
pub fn loss_g2(g: &mut Graph, gen_features: Var, target: Var) -> Result<Var, LossError> {
    Ok(g.mse(target, gen_features)?)
}

/// Classifier objective during adversarial steps: `L_c + λ L_o + β J`.
///
/// `gen_features` are classifier features of generated samples, either from
/// the adversarial generator or from the boundary generator.
#[allow(clippy::too_many_arguments)]
pub fn loss_classifier_adv(
    g: &mut Graph,
    features: Var,
    labels: &[usize],
    protos: &BoundPrototypes,
    h: &HyperParams,
    gen_features: Var,
    center: &[f64],
    kappa: f64,
) -> Result<Objective, LossError> {
    let base = loss_mpf(g, features, labels, protos, h)?;
    let j = loss_j(g, gen_features, center, kappa, protos.radius)?;
    let weighted = g.scale(j.value, h.beta)?;
    let total = g.add(base.total, weighted)?;
    Ok(Objective {
        total,
        breakdown: LossBreakdown {
            j: g.scalar(j.value),
            total: g.scalar(total),
            j_active: j.active,
            ..base.breakdown
        },
    })
}
