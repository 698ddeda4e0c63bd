//! Prototype geometry: the hybrid distance, the mean center, the prototype
//! spread and the expansion factor that scales the radius into the edge
//! region of the open space.

use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::sampling::SeededRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vector dimensions differ: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("prototype set needs at least one class and one feature dimension, got {classes} × {dim}")]
    Empty { classes: usize, dim: usize },
    #[error("prototype centers must be finite")]
    NonFinite,
    #[error("initial radius must be positive to compute the expansion factor, got {0}")]
    NonPositiveRadius(f64),
    #[error(transparent)]
    Tensor(#[from] AutodiffError),
}

/// Learnable class prototypes (one row per known class) and the shared
/// margin radius.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    centers: Tensor,
    radius: Tensor,
}

impl PrototypeSet {
    /// Wraps an `N × m` center matrix with the radius at exactly 0.
    pub fn new(centers: Tensor) -> Result<Self, GeometryError> {
        Self::with_radius(centers, 0.0)
    }

    pub fn with_radius(centers: Tensor, radius: f64) -> Result<Self, GeometryError> {
        if centers.ndim() != 2 || centers.rows() == 0 || centers.cols() == 0 {
            let (classes, dim) = match centers.shape() {
                [r, c] => (*r, *c),
                _ => (0, 0),
            };
            return Err(GeometryError::Empty { classes, dim });
        }
        if !centers.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(PrototypeSet {
            centers,
            radius: Tensor::scalar(radius),
        })
    }

    /// Centers drawn i.i.d. from `N(0, std²)`, radius 0.
    pub fn random(classes: usize, dim: usize, std: f64, rng: &mut SeededRng) -> Result<Self, GeometryError> {
        let data = (0..classes * dim).map(|_| std * rng.standard_normal()).collect();
        Self::new(Tensor::new(vec![classes, dim], data)?)
    }

    pub fn num_classes(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn centers(&self) -> &Tensor {
        &self.centers
    }

    pub fn center(&self, k: usize) -> &[f64] {
        self.centers.row(k)
    }

    pub fn radius(&self) -> f64 {
        self.radius.item()
    }

    pub fn radius_tensor(&self) -> &Tensor {
        &self.radius
    }

    /// Mutable access for optimizers: `[centers, radius]`.
    pub fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.centers, &mut self.radius]
    }

    /// Places centers and radius on `g`, tracked when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundPrototypes {
        let mut leaf = |t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        BoundPrototypes {
            centers: leaf(&self.centers),
            radius: leaf(&self.radius),
        }
    }
}

/// A [`PrototypeSet`] living on one graph.
#[derive(Debug, Clone, Copy)]
pub struct BoundPrototypes {
    pub centers: Var,
    pub radius: Var,
}

impl BoundPrototypes {
    /// Handles in the same order as [`PrototypeSet::params_mut`].
    pub fn params(&self) -> [Var; 2] {
        [self.centers, self.radius]
    }
}

/// Mean prototype `center` (O_c) and summed spread `d0 = Σ_k d_e(O^k, O_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterStats {
    pub center: Vec<f64>,
    pub spread: f64,
}

fn check_dims(f: &[f64], c: &[f64]) -> Result<(), GeometryError> {
    if f.len() != c.len() {
        return Err(GeometryError::DimMismatch {
            left: f.len(),
            right: c.len(),
        });
    }
    Ok(())
}

/// Mean squared Euclidean distance, `‖f − c‖² / m`.
pub fn dist_e(f: &[f64], c: &[f64]) -> Result<f64, GeometryError> {
    check_dims(f, c)?;
    if f.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = f.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / f.len() as f64)
}

/// Dot product `f · c`.
pub fn dist_d(f: &[f64], c: &[f64]) -> Result<f64, GeometryError> {
    check_dims(f, c)?;
    Ok(f.iter().zip(c).map(|(a, b)| a * b).sum())
}

/// `dist_e − dist_d`; may be negative.
pub fn dist_hybrid(f: &[f64], c: &[f64]) -> Result<f64, GeometryError> {
    Ok(dist_e(f, c)? - dist_d(f, c)?)
}

pub fn center_stats(protos: &PrototypeSet) -> CenterStats {
    let (n, m) = (protos.num_classes(), protos.dim());
    let mut center = vec![0.0; m];
    for k in 0..n {
        for (c, v) in center.iter_mut().zip(protos.center(k)) {
            *c += v;
        }
    }
    center.iter_mut().for_each(|c| *c /= n as f64);
    let spread = (0..n)
        .map(|k| dist_e(protos.center(k), &center).expect("rows share the center's dimension"))
        .sum();
    CenterStats { center, spread }
}

/// Expansion factor `κ = (γ + d0 / R0) · ln(t + 3)` for epoch index `t`.
///
/// Because `ln 3 > 1`, the result always exceeds `γ + d0 / R0`.
pub fn kappa(gamma: f64, d0: f64, r0: f64, epoch: usize) -> Result<f64, GeometryError> {
    if r0.is_nan() || r0 <= 0.0 {
        return Err(GeometryError::NonPositiveRadius(r0));
    }
    Ok((gamma + d0 / r0) * ((epoch + 3) as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn protos(rows: &[Vec<f64>]) -> PrototypeSet {
        PrototypeSet::new(Tensor::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(dist_e(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert_eq!(dist_e(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(dist_e(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 12.5);
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dist_d(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(dist_d(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(dist_d(&[2.0, -1.0], &[3.0, 4.0]).unwrap(), 2.0);
    }

    #[test]
    fn hybrid_examples() {
        assert_eq!(dist_hybrid(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), -2.0);
        assert_eq!(dist_hybrid(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let c = [0.5, -2.0, 3.0];
        let closed = c.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((dist_hybrid(&[0.0; 3], &c).unwrap() - closed).abs() < 1e-15);
    }

    #[test]
    fn hybrid_is_symmetric_in_its_arguments() {
        // Both d_e and the dot product are symmetric, so no asymmetric witness exists.
        let (a, b) = ([2.0, -1.0, 0.5], [3.0, 4.0, -2.0]);
        assert_eq!(dist_hybrid(&a, &b).unwrap(), dist_hybrid(&b, &a).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert_eq!(
            dist_e(&[1.0], &[1.0, 2.0]),
            Err(GeometryError::DimMismatch { left: 1, right: 2 })
        );
        assert!(dist_d(&[1.0], &[]).is_err());
        assert!(dist_hybrid(&[], &[1.0]).is_err());
    }

    #[test]
    fn single_prototype_stats() {
        let s = center_stats(&protos(&[vec![0.4, -1.2]]));
        assert_eq!(s.center, vec![0.4, -1.2]);
        assert_eq!(s.spread, 0.0);
    }

    #[test]
    fn opposite_prototype_stats() {
        let s = center_stats(&protos(&[vec![1.0, 0.0], vec![-1.0, 0.0]]));
        assert_eq!(s.center, vec![0.0, 0.0]);
        assert_eq!(s.spread, 1.0);
    }

    #[test]
    fn radius_starts_at_zero() {
        let mut rng = SeededRng::new(3);
        let p = PrototypeSet::random(4, 8, 1.0, &mut rng).unwrap();
        assert_eq!(p.radius(), 0.0);
        assert_eq!(p.centers().shape(), &[4, 8]);
        assert!(PrototypeSet::new(Tensor::zeros(&[0, 3])).is_err());
    }

    #[test]
    fn kappa_examples() {
        let k = kappa(10.0, 5.0, 1.0, 0).unwrap();
        assert!((k - 16.479_184_330_021_646).abs() < 1e-12, "{k}");
        let k = kappa(10.0, 0.0, 1.0, 0).unwrap();
        assert!((k - 10.986_122_886_681_098).abs() < 1e-12, "{k}");
        assert!(kappa(10.0, 1.0, 0.0, 0).is_err());
        assert!(kappa(10.0, 1.0, -0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn euclidean_is_symmetric(a in prop::collection::vec(-10.0f64..10.0, 5), b in prop::collection::vec(-10.0f64..10.0, 5)) {
            prop_assert_eq!(dist_e(&a, &b).unwrap(), dist_e(&b, &a).unwrap());
        }

        #[test]
        fn kappa_grows_and_exceeds_bound(gamma in 1.0f64..20.0, d0 in 0.0f64..50.0, r0 in 0.01f64..10.0, t in 0usize..200) {
            let k0 = kappa(gamma, d0, r0, t).unwrap();
            let k1 = kappa(gamma, d0, r0, t + 1).unwrap();
            prop_assert!(k1 > k0);
            prop_assert!(k0 > gamma + d0 / r0);
        }

        #[test]
        fn stats_are_translation_equivariant(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..6),
            shift in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let base = center_stats(&protos(&rows));
            let moved: Vec<Vec<f64>> = rows.iter()
                .map(|r| r.iter().zip(&shift).map(|(a, b)| a + b).collect())
                .collect();
            let moved = center_stats(&protos(&moved));
            for ((c0, c1), s) in base.center.iter().zip(&moved.center).zip(&shift) {
                prop_assert!((c1 - c0 - s).abs() < 1e-9);
            }
            prop_assert!((base.spread - moved.spread).abs() < 1e-9);
        }
    }
}
