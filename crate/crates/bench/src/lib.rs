//! Shared inputs for the benchmarks.

use ampf_core::data::make_gaussian_openset;
use ampf_core::metrics::ScoredSample;
use ampf_core::{GaussianSpec, OpenSplit, SeededRng, Tensor};

pub fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Tensor::new(vec![rows, cols], data).expect("length matches shape")
}

/// The default synthetic benchmark at `per_class` rows per cluster.
pub fn synthetic(per_class: usize) -> OpenSplit {
    let spec = GaussianSpec {
        per_class,
        ..GaussianSpec::default()
    };
    make_gaussian_openset(&mut SeededRng::new(0), &spec).expect("default spec is feasible")
}

/// `n` four-class samples, a fifth of them unknown, with noisy scores.
pub fn scored(n: usize) -> Vec<ScoredSample> {
    let mut rng = SeededRng::new(1);
    (0..n)
        .map(|i| {
            let known = i % 5 != 0;
            let mut probs: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let s: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= s);
            let pred = ampf_core::metrics::argmax(&probs);
            ScoredSample {
                true_label: if known { 1 + i % 4 } else { 5 },
                pred_label: pred,
                log_score: rng.standard_normal() + if known { 1.0 } else { 0.0 },
                probs,
            }
        })
        .collect()
}
