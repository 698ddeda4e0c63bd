//! Labeled feature sets, the synthetic Gaussian open-set benchmark, CSV
//! ingestion and seeded mini-batching.
//!
//! Known classes carry labels `1..=N`; every unknown sample carries `N + 1`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::sampling::SeededRng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{0}")]
    InvalidSpec(String),
    #[error("{count} labels for {rows} feature rows")]
    LengthMismatch { rows: usize, count: usize },
    #[error("label {label} outside 1..={max}")]
    LabelOutOfRange { label: usize, max: usize },
    #[error("feature matrix contains a non-finite value")]
    NonFinite,
    #[error("data set is empty")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: header must be f0,...,f{{d-1}},label; found `{found}`")]
    Header { path: String, found: String },
    #[error("{path}, line {line}: {msg}")]
    Row { path: String, line: u64, msg: String },
}

/// A feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    features: Tensor,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledSet {
    /// `classes` is the number of known classes `N`; labels may be `1..=N + 1`.
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self, DataError> {
        if features.ndim() != 2 {
            return Err(DataError::InvalidSpec(format!(
                "features must be a matrix, got shape {:?}",
                features.shape()
            )));
        }
        if features.rows() != labels.len() {
            return Err(DataError::LengthMismatch {
                rows: features.rows(),
                count: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l == 0 || l > classes + 1) {
            return Err(DataError::LabelOutOfRange {
                label,
                max: classes + 1,
            });
        }
        if !features.is_finite() {
            return Err(DataError::NonFinite);
        }
        Ok(LabeledSet {
            features,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn unknown_label(&self) -> usize {
        self.classes + 1
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn count_unknown(&self) -> usize {
        self.labels.iter().filter(|&&l| l == self.unknown_label()).count()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> LabeledSet {
        let dim = self.dim();
        let mut data = Vec::with_capacity(idx.len() * dim);
        for &i in idx {
            data.extend_from_slice(self.features.row(i));
        }
        LabeledSet {
            features: Tensor::new(vec![idx.len(), dim], data).expect("length matches shape"),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &LabeledSet) -> Result<LabeledSet, DataError> {
        if self.dim() != other.dim() || self.classes != other.classes {
            return Err(DataError::InvalidSpec(format!(
                "cannot join sets of shape {}×{} and {}×{}",
                self.dim(),
                self.classes,
                other.dim(),
                other.classes
            )));
        }
        let mut data = self.features.data().to_vec();
        data.extend_from_slice(other.features.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        LabeledSet::new(Tensor::new(vec![labels.len(), self.dim()], data)?, labels, self.classes)
    }

    /// Errors unless every known class `1..=N` has at least one row and no row is unknown.
    pub fn require_training_ready(&self) -> Result<(), DataError> {
        if self.is_empty() {
            return Err(DataError::Empty);
        }
        let mut seen = vec![false; self.classes];
        for &l in &self.labels {
            if l > self.classes {
                return Err(DataError::InvalidSpec(
                    "training data contains unknown-class rows".into(),
                ));
            }
            seen[l - 1] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(DataError::InvalidSpec(format!("class {} has no training rows", k + 1)));
        }
        Ok(())
    }
}

impl From<crate::autodiff::AutodiffError> for DataError {
    fn from(e: crate::autodiff::AutodiffError) -> Self {
        DataError::InvalidSpec(e.to_string())
    }
}

/// Known-class training rows plus the two test populations.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSplit {
    pub train: LabeledSet,
    pub test_known: LabeledSet,
    pub test_unknown: LabeledSet,
}

impl OpenSplit {
    /// Known and unknown test rows together.
    pub fn test(&self) -> LabeledSet {
        self.test_known
            .concat(&self.test_unknown)
            .expect("test halves share dimension and class count")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub known: usize,
    pub unknown: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    /// Per-coordinate standard deviation of each cluster.
    pub std: f64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        GaussianSpec {
            known: 4,
            unknown: 2,
            dim: 2,
            per_class: 200,
            separation: 8.0,
            std: 1.0,
        }
    }
}

/// Fraction of each known cluster assigned to training.
pub const TRAIN_FRACTION: f64 = 0.8;

fn cluster_means(spec: &GaussianSpec, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let k = spec.known + spec.unknown;
    // Slight inflation keeps rounding from pulling any pair under the separation.
    let s = spec.separation * (1.0 + 1e-9);
    if spec.dim == 1 {
        let offset = (k - 1) as f64 / 2.0;
        return (0..k).map(|i| vec![(i as f64 - offset) * s]).collect();
    }
    if spec.dim >= k && k > 3 {
        // Scaled basis vectors form a regular simplex with edge s.
        let mut means = vec![vec![0.0; spec.dim]; k];
        for (i, m) in means.iter_mut().enumerate() {
            m[i] = s / 2f64.sqrt();
        }
        let centroid: Vec<f64> = (0..spec.dim)
            .map(|j| means.iter().map(|m| m[j]).sum::<f64>() / k as f64)
            .collect();
        for m in &mut means {
            m.iter_mut().zip(&centroid).for_each(|(v, c)| *v -= c);
        }
        return means;
    }
    // Regular polygon in the first two coordinates with adjacent chord s.
    let radius = s / (2.0 * (std::f64::consts::PI / k as f64).sin());
    let phase = rng.uniform() * std::f64::consts::TAU;
    (0..k)
        .map(|i| {
            let a = phase + std::f64::consts::TAU * i as f64 / k as f64;
            let mut m = vec![0.0; spec.dim];
            m[0] = radius * a.cos();
            m[1] = radius * a.sin();
            m
        })
        .collect()
}

/// Slot of each cluster along the placement order: known clusters first,
/// then unknown, with the unknown slots spread evenly between known ones so
/// that each unknown cluster sits between known classes.
fn interleaved_slots(known: usize, unknown: usize) -> Vec<usize> {
    let k = known + unknown;
    let open: Vec<usize> = (0..unknown).map(|j| (j + 1) * k / unknown - 1).collect();
    (0..k)
        .filter(|s| !open.contains(s))
        .chain(open.iter().copied())
        .collect()
}

/// Isotropic Gaussian clusters: the first `known` become classes `1..=N`,
/// split 80/20 into train and test; the rest become unknown test rows.
pub fn make_gaussian_openset(rng: &mut SeededRng, spec: &GaussianSpec) -> Result<OpenSplit, DataError> {
    if spec.known < 2 || spec.unknown < 1 || spec.dim < 1 || spec.per_class < 2 {
        return Err(DataError::InvalidSpec(format!(
            "need known ≥ 2, unknown ≥ 1, dim ≥ 1 and per_class ≥ 2; got {} / {} / {} / {}",
            spec.known, spec.unknown, spec.dim, spec.per_class
        )));
    }
    if !(spec.separation > 0.0 && spec.separation.is_finite()) || !(spec.std >= 0.0 && spec.std.is_finite()) {
        return Err(DataError::InvalidSpec(format!(
            "separation must be positive and std non-negative; got {} and {}",
            spec.separation, spec.std
        )));
    }
    let slots = interleaved_slots(spec.known, spec.unknown);
    let placed = cluster_means(spec, rng);
    let means: Vec<Vec<f64>> = slots.iter().map(|&i| placed[i].clone()).collect();
    for (i, a) in means.iter().enumerate() {
        for b in &means[i + 1..] {
            let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            if d < spec.separation {
                return Err(DataError::InvalidSpec(format!(
                    "could not place clusters {} apart in {} dimensions",
                    spec.separation, spec.dim
                )));
            }
        }
    }

    let n = spec.known;
    let n_train = ((spec.per_class as f64) * TRAIN_FRACTION).round() as usize;
    let (mut train, mut test, mut unknown) = (Vec::new(), Vec::new(), Vec::new());
    for (c, mean) in means.iter().enumerate() {
        let mut rows: Vec<Vec<f64>> = (0..spec.per_class)
            .map(|_| mean.iter().map(|m| m + spec.std * rng.standard_normal()).collect())
            .collect();
        if c < n {
            rng.shuffle(&mut rows);
            let rest = rows.split_off(n_train);
            train.extend(rows.into_iter().map(|r| (r, c + 1)));
            test.extend(rest.into_iter().map(|r| (r, c + 1)));
        } else {
            unknown.extend(rows.into_iter().map(|r| (r, n + 1)));
        }
    }
    let build = |rows: Vec<(Vec<f64>, usize)>| -> Result<LabeledSet, DataError> {
        let labels = rows.iter().map(|(_, l)| *l).collect();
        let data = rows.into_iter().flat_map(|(r, _)| r).collect::<Vec<_>>();
        let count = data.len() / spec.dim;
        LabeledSet::new(Tensor::new(vec![count, spec.dim], data)?, labels, n)
    };
    Ok(OpenSplit {
        train: build(train)?,
        test_known: build(test)?,
        test_unknown: build(unknown)?,
    })
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics of `set`; constant columns get unit scale.
    pub fn fit(set: &LabeledSet) -> Result<Self, DataError> {
        if set.is_empty() {
            return Err(DataError::Empty);
        }
        let (n, d) = (set.len() as f64, set.dim());
        let x = set.features();
        let mean: Vec<f64> = (0..d)
            .map(|j| (0..set.len()).map(|i| x.get(i, j)).sum::<f64>() / n)
            .collect();
        let std = (0..d)
            .map(|j| {
                let var = (0..set.len()).map(|i| (x.get(i, j) - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, set: &LabeledSet) -> Result<LabeledSet, DataError> {
        Ok(LabeledSet {
            features: self.apply_features(set.features())?,
            labels: set.labels.clone(),
            classes: set.classes,
        })
    }

    pub fn apply_features(&self, x: &Tensor) -> Result<Tensor, DataError> {
        if x.ndim() != 2 || x.cols() != self.mean.len() {
            return Err(DataError::InvalidSpec(format!(
                "standardizer fitted on {} features, got shape {:?}",
                self.mean.len(),
                x.shape()
            )));
        }
        let d = self.mean.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect();
        Ok(Tensor::new(x.shape().to_vec(), data)?)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a CSV with header `f0,...,f{d-1},label`.
///
/// `classes` is the number of known classes; labels must lie in `1..=classes + 1`.
pub fn load_csv(path: &Path, classes: usize) -> Result<LabeledSet, DataError> {
    let name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: name.clone(),
                source,
            },
            other => DataError::Row {
                path: name.clone(),
                line: 1,
                msg: format!("{other:?}"),
            },
        })?;
    let header = reader
        .headers()
        .map_err(|e| DataError::Row {
            path: name.clone(),
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let dim = header.len().saturating_sub(1);
    let valid = dim >= 1
        && header.get(dim) == Some("label")
        && (0..dim).all(|j| header.get(j) == Some(format!("f{j}").as_str()));
    if !valid {
        return Err(DataError::Header {
            path: name,
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let (mut data, mut labels) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Row {
            path: name.clone(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |msg: String| DataError::Row {
            path: name.clone(),
            line,
            msg,
        };
        if record.len() != dim + 1 {
            return Err(row_err(format!("expected {} fields, found {}", dim + 1, record.len())));
        }
        for j in 0..dim {
            let field = &record[j];
            let v: f64 = field
                .parse()
                .map_err(|_| row_err(format!("column f{j}: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(row_err(format!("column f{j}: non-finite value")));
            }
            data.push(v);
        }
        let field = &record[dim];
        let label: usize = field
            .parse()
            .map_err(|_| row_err(format!("label `{field}` is not a positive integer")))?;
        if label == 0 || label > classes + 1 {
            return Err(row_err(format!("label {label} outside 1..={}", classes + 1)));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    LabeledSet::new(Tensor::new(vec![labels.len(), dim], data)?, labels, classes)
}

/// Writes `set` in the format read by [`load_csv`]; values round-trip exactly.
pub fn save_csv(set: &LabeledSet, path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (0..set.dim())
        .map(|j| format!("f{j}"))
        .chain(["label".into()])
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err(path))?;
    for i in 0..set.len() {
        let row: Vec<String> = set.features.row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{},{}", row.join(","), set.labels[i]).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// One mini-batch of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

/// A seeded shuffle of `set` cut into batches of `n`; the last may be smaller.
pub fn batch_iter(set: &LabeledSet, rng: &mut SeededRng, n: usize) -> Result<Vec<Batch>, DataError> {
    if set.is_empty() {
        return Err(DataError::Empty);
    }
    if n == 0 {
        return Err(DataError::InvalidSpec("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    rng.shuffle(&mut order);
    Ok(order
        .chunks(n)
        .map(|idx| {
            let s = set.select(idx);
            Batch {
                features: s.features,
                labels: s.labels,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn spec(known: usize, unknown: usize, dim: usize, per_class: usize, separation: f64) -> GaussianSpec {
        GaussianSpec {
            known,
            unknown,
            dim,
            per_class,
            separation,
            std: 1.0,
        }
    }

    fn row_keys(set: &LabeledSet) -> Vec<Vec<u64>> {
        (0..set.len())
            .map(|i| set.features().row(i).iter().map(|v| v.to_bits()).collect())
            .collect()
    }

    #[test]
    fn split_sizes() {
        let s = make_gaussian_openset(&mut SeededRng::new(1), &spec(2, 1, 2, 100, 6.0)).unwrap();
        assert_eq!(
            (s.train.len(), s.test_known.len(), s.test_unknown.len()),
            (160, 40, 100)
        );
        assert!(s.test_unknown.labels().iter().all(|&l| l == 3));
        assert!(s.train.labels().iter().all(|&l| l == 1 || l == 2));
        s.train.require_training_ready().unwrap();
    }

    #[test]
    fn train_and_test_are_disjoint() {
        let s = make_gaussian_openset(&mut SeededRng::new(2), &spec(3, 2, 2, 50, 5.0)).unwrap();
        let train: HashSet<_> = row_keys(&s.train).into_iter().collect();
        assert!(row_keys(&s.test()).iter().all(|r| !train.contains(r)));
    }

    #[test]
    fn same_seed_same_split() {
        let sp = spec(4, 2, 3, 30, 8.0);
        let a = make_gaussian_openset(&mut SeededRng::new(7), &sp).unwrap();
        let b = make_gaussian_openset(&mut SeededRng::new(7), &sp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn means_respect_separation_in_every_layout() {
        for (k, u, d) in [(2, 1, 1), (4, 2, 2), (3, 2, 3), (4, 2, 8)] {
            let sp = GaussianSpec {
                std: 0.0,
                ..spec(k, u, d, 2, 3.0)
            };
            let s = make_gaussian_openset(&mut SeededRng::new(3), &sp).unwrap();
            let all = s.train.concat(&s.test()).unwrap();
            for i in 0..all.len() {
                for j in 0..all.len() {
                    let li = all.labels()[i];
                    let lj = all.labels()[j];
                    let dist: f64 = all
                        .features()
                        .row(i)
                        .iter()
                        .zip(all.features().row(j))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if li != lj && li <= k && lj <= k {
                        assert!(dist >= 3.0, "{k}/{u}/{d}: {dist}");
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_slots_sit_between_known_ones() {
        assert_eq!(interleaved_slots(4, 2), vec![0, 1, 3, 4, 2, 5]);
        assert_eq!(interleaved_slots(2, 1), vec![0, 1, 2]);
        for (known, unknown) in [(2, 5), (3, 3), (10, 1), (5, 4)] {
            let mut s = interleaved_slots(known, unknown);
            s.sort();
            assert_eq!(s, (0..known + unknown).collect::<Vec<_>>());
        }
    }

    #[test]
    fn nearest_centroid_separates_well_spaced_clusters() {
        let s = make_gaussian_openset(&mut SeededRng::new(5), &spec(4, 2, 2, 500, 10.0)).unwrap();
        let (n, d) = (4, 2);
        let mut cent = vec![vec![0.0; d]; n];
        let mut count = vec![0.0; n];
        for i in 0..s.train.len() {
            let k = s.train.labels()[i] - 1;
            count[k] += 1.0;
            for (j, c) in cent[k].iter_mut().enumerate() {
                *c += s.train.features().get(i, j);
            }
        }
        for k in 0..n {
            cent[k].iter_mut().for_each(|v| *v /= count[k]);
        }
        let test = &s.test_known;
        let correct = (0..test.len())
            .filter(|&i| {
                let f = test.features().row(i);
                let best = (0..n)
                    .min_by(|&a, &b| {
                        let da: f64 = f.iter().zip(&cent[a]).map(|(x, c)| (x - c).powi(2)).sum();
                        let db: f64 = f.iter().zip(&cent[b]).map(|(x, c)| (x - c).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                best + 1 == test.labels()[i]
            })
            .count();
        assert!(correct as f64 / test.len() as f64 >= 0.999);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut rng = SeededRng::new(0);
        assert!(make_gaussian_openset(&mut rng, &spec(1, 1, 2, 10, 5.0)).is_err());
        assert!(make_gaussian_openset(&mut rng, &spec(2, 0, 2, 10, 5.0)).is_err());
        assert!(make_gaussian_openset(&mut rng, &spec(2, 1, 2, 10, 0.0)).is_err());
    }

    fn write(dir: &Path, text: &str) -> std::path::PathBuf {
        let p = dir.join("d.csv");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn csv_reads_rows_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f0,f1,label\n1.5,2,1\n-3,4e-1,2\n0,0,3\n");
        let set = load_csv(&p, 2).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.labels(), &[1, 2, 3]);
        assert_eq!(set.features().row(1), &[-3.0, 0.4]);
        assert_eq!(set.count_unknown(), 1);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f0,f1,label\n1,2,1\n1,abc,2\n");
        let err = load_csv(&p, 2).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let p = write(dir.path(), "f0,f1,label\n1,2,7\n");
        assert!(load_csv(&p, 2).unwrap_err().to_string().contains("line 2"));
        let p = write(dir.path(), "x,y,label\n1,2,1\n");
        assert!(matches!(load_csv(&p, 2), Err(DataError::Header { .. })));
        let p = write(dir.path(), "f0,label\n");
        assert!(matches!(load_csv(&p, 2), Err(DataError::Empty)));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_gaussian_openset(&mut SeededRng::new(9), &spec(3, 1, 4, 20, 4.0)).unwrap();
        let set = s.test();
        let p = dir.path().join("t.csv");
        save_csv(&set, &p).unwrap();
        assert_eq!(load_csv(&p, 3).unwrap(), set);
    }

    #[test]
    fn standardizer_fits_train_only() {
        let s = make_gaussian_openset(&mut SeededRng::new(4), &spec(2, 1, 2, 100, 6.0)).unwrap();
        let z = Standardizer::fit(&s.train).unwrap();
        let t = z.apply(&s.train).unwrap();
        let fitted = Standardizer::fit(&t).unwrap();
        for j in 0..2 {
            assert!(fitted.mean[j].abs() < 1e-12);
            assert!((fitted.std[j] - 1.0).abs() < 1e-12);
        }
        let u = z.apply(&s.test_unknown).unwrap();
        let x = s.test_unknown.features().get(0, 1);
        assert_eq!(u.features().get(0, 1), (x - z.mean[1]) / z.std[1]);
    }

    #[test]
    fn batches_cover_the_set() {
        let s = make_gaussian_openset(&mut SeededRng::new(1), &spec(2, 1, 2, 63, 6.0)).unwrap();
        let set = s
            .train
            .concat(&s.test_known)
            .unwrap()
            .select(&(0..100).collect::<Vec<_>>());
        let batches = batch_iter(&set, &mut SeededRng::derive(1, &[0]), 64).unwrap();
        assert_eq!(batches.iter().map(|b| b.labels.len()).collect::<Vec<_>>(), vec![64, 36]);
        let mut seen: Vec<Vec<u64>> = batches
            .iter()
            .flat_map(|b| {
                (0..b.labels.len())
                    .map(|i| b.features.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut all = row_keys(&set);
        seen.sort();
        all.sort();
        assert_eq!(seen, all);

        let again = batch_iter(&set, &mut SeededRng::derive(1, &[0]), 64).unwrap();
        let other = batch_iter(&set, &mut SeededRng::derive(1, &[1]), 64).unwrap();
        assert_eq!(batches, again);
        assert_ne!(batches, other);
        assert!(batch_iter(&set.select(&[]), &mut SeededRng::new(0), 4).is_err());
    }
}
