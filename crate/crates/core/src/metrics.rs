//! Open-set scoring and evaluation: closed-set accuracy, AUROC over the
//! known-class score, and the CCR/FPR curve with its area (OSCR).
//!
//! Ranking metrics use the prototype score `exp(−min_k d)`; thresholded
//! rates use the maximum softmax probability.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::geometry::PrototypeSet;
use crate::losses::{class_prob_values, hybrid_distances, LossError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no known-class samples")]
    NoKnown,
    #[error("no unknown samples")]
    NoUnknown,
    #[error("scores csv line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// One evaluated test row.
///
/// `log_score` is `−min_k d(Θ(x), O^k)`, the log of the known-class score;
/// keeping it in the log domain avoids overflow for features far inside a
/// prototype while preserving the ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub true_label: usize,
    pub pred_label: usize,
    pub log_score: f64,
    pub probs: Vec<f64>,
}

impl ScoredSample {
    pub fn is_known(&self) -> bool {
        self.true_label <= self.probs.len()
    }

    pub fn known_score(&self) -> f64 {
        self.log_score.exp()
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[self.pred_label - 1]
    }
}

/// 1-based index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = k;
        }
    }
    best + 1
}

/// `exp(−min_k d(f, O^k))` per feature row.
pub fn known_score(features: &Tensor, protos: &PrototypeSet) -> Result<Vec<f64>, LossError> {
    Ok(min_distances(features, protos)?
        .into_iter()
        .map(|d| (-d).exp())
        .collect())
}

fn min_distances(features: &Tensor, protos: &PrototypeSet) -> Result<Vec<f64>, LossError> {
    let mut g = crate::autodiff::Graph::new();
    let bp = protos.bind(&mut g, false);
    let f = g.constant(features.clone());
    let d = hybrid_distances(&mut g, f, bp.centers)?;
    let d = g.value(d);
    Ok((0..d.rows())
        .map(|i| d.row(i).iter().copied().fold(f64::INFINITY, f64::min))
        .collect())
}

/// Scores classifier features of a labeled test set.
pub fn score_samples(
    features: &Tensor,
    labels: &[usize],
    protos: &PrototypeSet,
) -> Result<Vec<ScoredSample>, LossError> {
    let probs = class_prob_values(features, protos)?;
    let mins = min_distances(features, protos)?;
    Ok(labels
        .iter()
        .zip(mins)
        .enumerate()
        .map(|(i, (&true_label, d))| {
            let p = probs.row(i).to_vec();
            ScoredSample {
                true_label,
                pred_label: argmax(&p),
                log_score: -d,
                probs: p,
            }
        })
        .collect())
}

fn split(samples: &[ScoredSample]) -> (Vec<&ScoredSample>, Vec<&ScoredSample>) {
    samples.iter().partition(|s| s.is_known())
}

/// Fraction of known samples classified correctly.
pub fn closed_accuracy(samples: &[ScoredSample]) -> Result<f64, MetricsError> {
    let (known, _) = split(samples);
    if known.is_empty() {
        return Err(MetricsError::NoKnown);
    }
    let correct = known.iter().filter(|s| s.pred_label == s.true_label).count();
    Ok(correct as f64 / known.len() as f64)
}

/// Mann–Whitney AUROC of known (positive) against unknown with ties at ½.
///
/// Computed from average ranks in `O(n log n)`.
pub fn auroc_scores(known: &[f64], unknown: &[f64]) -> Result<f64, MetricsError> {
    if known.is_empty() {
        return Err(MetricsError::NoKnown);
    }
    if unknown.is_empty() {
        return Err(MetricsError::NoUnknown);
    }
    let mut all: Vec<(f64, bool)> = known
        .iter()
        .map(|&s| (s, true))
        .chain(unknown.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (known.len() as f64, unknown.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

pub fn auroc(samples: &[ScoredSample]) -> Result<f64, MetricsError> {
    let (known, unknown) = split(samples);
    let k: Vec<f64> = known.iter().map(|s| s.log_score).collect();
    let u: Vec<f64> = unknown.iter().map(|s| s.log_score).collect();
    auroc_scores(&k, &u)
}

/// True/false positive rates at every distinct score threshold, from
/// `(0, 0)` to `(1, 1)`; integrating it with the trapezoid rule gives AUROC.
pub fn roc_curve(known: &[f64], unknown: &[f64]) -> Vec<(f64, f64)> {
    let mut thresholds: Vec<f64> = known.iter().chain(unknown).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let rate = |xs: &[f64], t: f64| xs.iter().filter(|&&s| s >= t).count() as f64 / xs.len() as f64;
    std::iter::once((0.0, 0.0))
        .chain(thresholds.into_iter().map(|t| (rate(unknown, t), rate(known, t))))
        .collect()
}

/// Trapezoidal area under `(x, y)` points, in the given order.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Correct classification rate at `τ`: known samples that are both correctly
/// classified and at least `τ` confident, over all known samples.
pub fn ccr(samples: &[ScoredSample], tau: f64) -> Result<f64, MetricsError> {
    let (known, _) = split(samples);
    if known.is_empty() {
        return Err(MetricsError::NoKnown);
    }
    let hit = known
        .iter()
        .filter(|s| s.pred_label == s.true_label && s.max_prob() >= tau)
        .count();
    Ok(hit as f64 / known.len() as f64)
}

/// False positive rate at `τ`: unknown samples accepted with confidence at least `τ`.
pub fn fpr(samples: &[ScoredSample], tau: f64) -> Result<f64, MetricsError> {
    let (_, unknown) = split(samples);
    if unknown.is_empty() {
        return Err(MetricsError::NoUnknown);
    }
    let hit = unknown.iter().filter(|s| s.max_prob() >= tau).count();
    Ok(hit as f64 / unknown.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub ccr: f64,
    pub fpr: f64,
}

/// CCR and FPR at every distinct maximum probability plus the sentinels
/// `τ = 0` and `τ = +∞`, sorted by ascending `τ`.
pub fn oscr_curve(samples: &[ScoredSample]) -> Result<Vec<CurvePoint>, MetricsError> {
    let (known, unknown) = split(samples);
    if known.is_empty() {
        return Err(MetricsError::NoKnown);
    }
    if unknown.is_empty() {
        return Err(MetricsError::NoUnknown);
    }
    let mut taus: Vec<f64> = samples.iter().map(|s| s.max_prob()).collect();
    taus.push(0.0);
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus.push(f64::INFINITY);

    // Sweep by ascending τ with two pointers over sorted populations.
    let mut correct: Vec<f64> = known
        .iter()
        .filter(|s| s.pred_label == s.true_label)
        .map(|s| s.max_prob())
        .collect();
    let mut open: Vec<f64> = unknown.iter().map(|s| s.max_prob()).collect();
    correct.sort_by(f64::total_cmp);
    open.sort_by(f64::total_cmp);
    let (nk, nu) = (known.len() as f64, unknown.len() as f64);
    let (mut ic, mut io) = (0, 0);
    Ok(taus
        .into_iter()
        .map(|tau| {
            while ic < correct.len() && correct[ic] < tau {
                ic += 1;
            }
            while io < open.len() && open[io] < tau {
                io += 1;
            }
            CurvePoint {
                tau,
                ccr: (correct.len() - ic) as f64 / nk,
                fpr: (open.len() - io) as f64 / nu,
            }
        })
        .collect())
}

/// Area under the CCR-versus-FPR curve.
pub fn oscr(samples: &[ScoredSample]) -> Result<f64, MetricsError> {
    let curve = oscr_curve(samples)?;
    Ok(oscr_area(&curve))
}

fn oscr_area(curve: &[CurvePoint]) -> f64 {
    // Descending τ walks FPR from 0 up to 1.
    let pts: Vec<(f64, f64)> = curve.iter().rev().map(|p| (p.fpr, p.ccr)).collect();
    trapezoid(&pts)
}

/// Evaluation summary. AUROC, OSCR and the curve are absent without unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub closed_acc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<CurvePoint>>,
}

impl MetricsReport {
    pub fn compute(samples: &[ScoredSample]) -> Result<Self, MetricsError> {
        let closed_acc = closed_accuracy(samples)?;
        if !samples.iter().any(|s| !s.is_known()) {
            return Ok(MetricsReport {
                closed_acc,
                auroc: None,
                oscr: None,
                curve: None,
            });
        }
        let curve = oscr_curve(samples)?;
        Ok(MetricsReport {
            closed_acc,
            auroc: Some(auroc(samples)?),
            oscr: Some(oscr_area(&curve)),
            curve: Some(curve),
        })
    }

    pub fn to_json(&self) -> String {
        // The infinite sentinel is not representable in JSON.
        let mut copy = self.clone();
        if let Some(c) = copy.curve.as_mut() {
            c.retain(|p| p.tau.is_finite());
        }
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }
}

/// Writes `true_label,pred_label,known_score,p1..pN`; `known_score` is the
/// log-domain score.
pub fn write_scores(samples: &[ScoredSample], mut w: impl Write) -> std::io::Result<()> {
    let n = samples.first().map_or(0, |s| s.probs.len());
    let probs: Vec<String> = (1..=n).map(|k| format!("p{k}")).collect();
    writeln!(w, "true_label,pred_label,known_score,{}", probs.join(","))?;
    for s in samples {
        let p: Vec<String> = s.probs.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{},{},{:e},{}", s.true_label, s.pred_label, s.log_score, p.join(","))?;
    }
    Ok(())
}

pub fn read_scores(r: impl BufRead) -> Result<Vec<ScoredSample>, MetricsError> {
    let mut out = Vec::new();
    let mut lines = r.lines();
    let header = lines.next().ok_or(MetricsError::Parse {
        line: 1,
        msg: "empty file".into(),
    })??;
    if !header.starts_with("true_label,pred_label,known_score") {
        return Err(MetricsError::Parse {
            line: 1,
            msg: format!("unexpected header `{header}`"),
        });
    }
    for (i, line) in lines.enumerate() {
        let line = line?;
        let bad = |msg: String| MetricsError::Parse { line: i + 2, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(bad("too few fields".into()));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("`{s}` is not a label")));
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
        out.push(ScoredSample {
            true_label: int(fields[0])?,
            pred_label: int(fields[1])?,
            log_score: float(fields[2])?,
            probs: fields[3..].iter().map(|s| float(s)).collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}

/// Writes the sweep as `tau,ccr,fpr` rows.
pub fn write_curve(curve: &[CurvePoint], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "tau,ccr,fpr")?;
    for p in curve {
        writeln!(w, "{:e},{:e},{:e}", p.tau, p.ccr, p.fpr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SeededRng;
    use proptest::prelude::*;

    fn sample(true_label: usize, probs: Vec<f64>, log_score: f64) -> ScoredSample {
        ScoredSample {
            true_label,
            pred_label: argmax(&probs),
            log_score,
            probs,
        }
    }

    fn pairwise(known: &[f64], unknown: &[f64]) -> f64 {
        let mut s = 0.0;
        for &k in known {
            for &u in unknown {
                s += if k > u {
                    1.0
                } else if k == u {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (known.len() * unknown.len()) as f64
    }

    #[test]
    fn known_score_examples() {
        let p = PrototypeSet::new(Tensor::from_rows(&[vec![1.0, 1.0], vec![-3.0, 2.0]]).unwrap()).unwrap();
        let s = known_score(&Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap(), &p).unwrap();
        assert!((s[0] - 2f64.exp()).abs() < 1e-12);
        // Origin sits at d = ‖O‖²/m from each prototype: 1 and 6.5.
        let s = known_score(&Tensor::zeros(&[1, 2]), &p).unwrap();
        assert!((s[0] - (-1f64).exp()).abs() < 1e-15);
        let z = PrototypeSet::new(Tensor::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(known_score(&Tensor::zeros(&[1, 2]), &z).unwrap()[0], 1.0);
        let two = PrototypeSet::new(Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap()).unwrap();
        assert!((known_score(&Tensor::zeros(&[1, 2]), &two).unwrap()[0] - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax(&[0.25, 0.5, 0.25]), 2);
        assert_eq!(argmax(&[0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 2);
    }

    #[test]
    fn accuracy_examples() {
        let all = vec![sample(1, vec![0.9, 0.1], 0.0), sample(2, vec![0.2, 0.8], 0.0)];
        assert_eq!(closed_accuracy(&all).unwrap(), 1.0);
        let half = vec![
            sample(1, vec![0.9, 0.1], 0.0),
            sample(1, vec![0.2, 0.8], 0.0),
            sample(3, vec![0.5, 0.5], 0.0),
        ];
        assert_eq!(closed_accuracy(&half).unwrap(), 0.5);
        assert!(closed_accuracy(&[sample(3, vec![0.5, 0.5], 0.0)]).is_err());
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc_scores(&[0.9, 0.8], &[0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(auroc_scores(&[0.9, 0.4], &[0.5, 0.1]).unwrap(), 0.75);
        assert_eq!(auroc_scores(&[0.3, 0.3], &[0.3]).unwrap(), 0.5);
        assert!(auroc_scores(&[], &[0.1]).is_err());
    }

    #[test]
    fn rates_at_extremes() {
        let s = vec![
            sample(1, vec![0.9, 0.1], 0.0),
            sample(2, vec![0.6, 0.4], 0.0),
            sample(3, vec![0.3, 0.7], 0.0),
        ];
        assert_eq!(ccr(&s, 0.0).unwrap(), closed_accuracy(&s).unwrap());
        assert_eq!(ccr(&s, 0.95).unwrap(), 0.0);
        assert_eq!(fpr(&s, 0.0).unwrap(), 1.0);
        assert_eq!(fpr(&s, 1.01).unwrap(), 0.0);
    }

    #[test]
    fn perfect_oscr() {
        let s = vec![
            sample(1, vec![0.95, 0.05], 1.0),
            sample(2, vec![0.1, 0.9], 1.0),
            sample(3, vec![0.55, 0.45], -1.0),
        ];
        assert_eq!(oscr(&s).unwrap(), 1.0);
        let curve = oscr_curve(&s).unwrap();
        assert!(curve.windows(2).all(|w| w[0].tau < w[1].tau));
    }

    #[test]
    fn separated_scores_give_accuracy() {
        // Every known outranks every unknown: CCR reaches a before FPR leaves 0.
        let mut s = Vec::new();
        for i in 0..10 {
            let label = if i < 7 { 1 } else { 2 };
            s.push(sample(label, vec![0.9 - 0.01 * i as f64, 0.1 + 0.01 * i as f64], 0.0));
            s.push(sample(3, vec![0.6 - 0.01 * i as f64, 0.4 + 0.01 * i as f64], 0.0));
        }
        assert!((oscr(&s).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn indistinguishable_scores_give_half_accuracy() {
        // Identical confidence distributions: CCR(τ) = a · FPR(τ), area a / 2.
        let mut s = Vec::new();
        for i in 0..1000 {
            let p = 0.5 + 0.4 * i as f64 / 1000.0;
            let label = if i % 10 < 7 { 1 } else { 2 };
            s.push(sample(label, vec![p, 1.0 - p], 0.0));
            s.push(sample(3, vec![p, 1.0 - p], 0.0));
        }
        let area = oscr(&s).unwrap();
        assert!((area - 0.35).abs() < 5e-3, "{area}");
    }

    fn random_samples(rng: &mut SeededRng, n: usize, classes: usize) -> Vec<ScoredSample> {
        (0..n)
            .map(|i| {
                let label = if i % 3 == 0 { classes + 1 } else { 1 + (i % classes) };
                // Quantized probabilities make ties common.
                let raw: Vec<f64> = (0..classes).map(|_| (rng.uniform() * 5.0).floor() + 1.0).collect();
                let total: f64 = raw.iter().sum();
                let probs: Vec<f64> = raw.iter().map(|r| ((r / total) * 1000.0).round() / 1000.0).collect();
                sample(label, probs, (rng.uniform() * 20.0).floor())
            })
            .collect()
    }

    #[test]
    fn roc_trapezoid_equals_rank_statistic() {
        let mut rng = SeededRng::new(21);
        for _ in 0..20 {
            let s = random_samples(&mut rng, 150, 3);
            let (k, u): (Vec<_>, Vec<_>) = s.iter().partition(|x| x.is_known());
            let k: Vec<f64> = k.iter().map(|x| x.log_score).collect();
            let u: Vec<f64> = u.iter().map(|x| x.log_score).collect();
            let a = auroc_scores(&k, &u).unwrap();
            assert!((trapezoid(&roc_curve(&k, &u)) - a).abs() < 1e-9);
            assert!((pairwise(&k, &u) - a).abs() < 1e-9);
        }
    }

    #[test]
    fn report_omits_open_set_metrics_without_unknowns() {
        let s = vec![sample(1, vec![0.9, 0.1], 0.0), sample(2, vec![0.2, 0.8], 0.0)];
        let r = MetricsReport::compute(&s).unwrap();
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert_eq!(keys, vec!["closed_acc"]);
    }

    #[test]
    fn report_keys_with_unknowns() {
        let s = random_samples(&mut SeededRng::new(2), 30, 2);
        let json: serde_json::Value = serde_json::from_str(&MetricsReport::compute(&s).unwrap().to_json()).unwrap();
        let mut keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(keys, vec!["auroc", "closed_acc", "curve", "oscr"]);
    }

    #[test]
    fn scores_csv_round_trip() {
        let s = random_samples(&mut SeededRng::new(3), 25, 4);
        let mut buf = Vec::new();
        write_scores(&s, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("true_label,pred_label,known_score,p1,p2,p3,p4\n"));
        assert_eq!(read_scores(buf.as_slice()).unwrap(), s);
        assert!(read_scores("nope\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn auroc_ignores_monotone_transforms(
            k in prop::collection::vec(-5.0f64..5.0, 1..40),
            u in prop::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let a = auroc_scores(&k, &u).unwrap();
            let t = |x: &f64| (x * 0.7).exp() + 3.0;
            let b = auroc_scores(&k.iter().map(t).collect::<Vec<_>>(), &u.iter().map(t).collect::<Vec<_>>()).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn rates_are_non_increasing(seed in 0u64..500, t0 in 0.0f64..1.0, dt in 0.0f64..0.5) {
            let s = random_samples(&mut SeededRng::new(seed), 40, 3);
            prop_assert!(ccr(&s, t0 + dt).unwrap() <= ccr(&s, t0).unwrap());
            prop_assert!(fpr(&s, t0 + dt).unwrap() <= fpr(&s, t0).unwrap());
        }
    }
}
