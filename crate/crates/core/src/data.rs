//! Seeded synthetic datasets and CSV loading.
//!
//! Generation uses ChaCha8 seeded with `seed` through `seed_from_u64`, and
//! standard normals from `rand_distr::StandardNormal`, so a spec and seed
//! always reproduce the same bytes.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn sample(&self, i: usize) -> (ArrayView1<'_, f64>, usize) {
        (self.features.row(i), self.labels[i])
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// `prefix.x` (n x d) and `prefix.y` (n) entries for the tensor container.
    pub fn to_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let x = Tensor::new(
            vec![self.len(), self.dim()],
            self.features.iter().copied().collect(),
        )
        .expect("feature matrix shape");
        let y = Tensor::vector(self.labels.iter().map(|&l| l as f64).collect());
        vec![(format!("{prefix}.x"), x), (format!("{prefix}.y"), y)]
    }

    pub fn from_tensors(x: &Tensor, y: &Tensor, num_classes: usize) -> Result<Self> {
        if x.shape().len() != 2 {
            return Err(Error::invalid("dataset features must be rank 2"));
        }
        let features = Array2::from_shape_vec((x.shape()[0], x.shape()[1]), x.data().to_vec())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let labels = y
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::invalid(format!("bad label value {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(features, labels, num_classes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    GaussianBlobs,
    TwoSpirals,
    File,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::GaussianBlobs => "gaussian_blobs",
            DatasetKind::TwoSpirals => "two_spirals",
            DatasetKind::File => "file",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_blobs" | "blobs" => Ok(DatasetKind::GaussianBlobs),
            "two_spirals" | "spirals" => Ok(DatasetKind::TwoSpirals),
            "file" | "csv" => Ok(DatasetKind::File),
            other => Err(Error::invalid(format!("unknown dataset kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub train_fraction: f64,
    /// CSV source for `DatasetKind::File`.
    pub path: Option<PathBuf>,
    pub has_header: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            kind: DatasetKind::GaussianBlobs,
            num_classes: 10,
            dim: 20,
            samples_per_class: 200,
            class_separation: 3.0,
            noise_sigma: 1.0,
            seed: 0,
            train_fraction: 0.8,
            path: None,
            has_header: false,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("data.num_classes must be >= 2"));
        }
        if self.dim < 2 {
            return Err(Error::invalid("data.dim must be >= 2"));
        }
        if self.kind != DatasetKind::File && self.samples_per_class == 0 {
            return Err(Error::invalid("data.samples_per_class must be >= 1"));
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return Err(Error::invalid("data.class_separation must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(Error::invalid("data.noise_sigma must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("data.train_fraction must lie in (0, 1)"));
        }
        if self.kind == DatasetKind::File && self.path.is_none() {
            return Err(Error::MissingKey("data.path".into()));
        }
        Ok(())
    }
}

/// Class centers: scaled basis vectors when `K <= d`, otherwise `K` points
/// at equal angles on a circle in the first two coordinates.
pub fn blob_centers(num_classes: usize, dim: usize, separation: f64) -> Array2<f64> {
    let mut centers = Array2::zeros((num_classes, dim));
    if num_classes <= dim {
        for c in 0..num_classes {
            centers[[c, c]] = separation;
        }
    } else {
        for c in 0..num_classes {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / num_classes as f64;
            centers[[c, 0]] = separation * angle.cos();
            centers[[c, 1]] = separation * angle.sin();
        }
    }
    centers
}

/// Builds the full dataset from `spec`, then splits it into (train, test)
/// by a seeded shuffle and a prefix cut.
pub fn generate(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let full = match spec.kind {
        DatasetKind::GaussianBlobs => gaussian_blobs(spec),
        DatasetKind::TwoSpirals => spirals(spec),
        DatasetKind::File => {
            let path = spec.path.as_ref().expect("validated");
            load_csv(path, spec.has_header, Some(spec.num_classes))?
        }
    };
    split(&full, spec.train_fraction, spec.seed)
}

pub fn split(full: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = full.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} leaves an empty split of {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // separate stream from the sample noise
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM);
    order.shuffle(&mut rng);
    Ok((
        full.subset(&order[..n_train]),
        full.subset(&order[n_train..]),
    ))
}

const SPLIT_STREAM: u64 = 0x5eed_0000_5911_7000;

fn gaussian_blobs(spec: &DatasetSpec) -> Dataset {
    let k = spec.num_classes;
    let n = k * spec.samples_per_class;
    let centers = blob_centers(k, spec.dim, spec.class_separation);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for i in 0..spec.samples_per_class {
            let row = c * spec.samples_per_class + i;
            for j in 0..spec.dim {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, j]] = centers[[c, j]] + spec.noise_sigma * z;
            }
            labels.push(c);
        }
    }
    Dataset {
        features,
        labels,
        num_classes: k,
    }
}

/// `K` interleaved spiral arms in the first two coordinates; remaining
/// coordinates are pure noise.
fn spirals(spec: &DatasetSpec) -> Dataset {
    let k = spec.num_classes;
    let n = k * spec.samples_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for i in 0..spec.samples_per_class {
            let row = c * spec.samples_per_class + i;
            let t: f64 = rng.random_range(0.0..1.0);
            let radius = spec.class_separation * t;
            let angle = 2.0 * std::f64::consts::PI * (c as f64 / k as f64 + 1.5 * t);
            for j in 0..spec.dim {
                let z: f64 = rng.sample(StandardNormal);
                let base = match j {
                    0 => radius * angle.cos(),
                    1 => radius * angle.sin(),
                    _ => 0.0,
                };
                features[[row, j]] = base + spec.noise_sigma * z;
            }
            labels.push(c);
        }
    }
    Dataset {
        features,
        labels,
        num_classes: k,
    }
}

/// Reads rows of `d` feature columns followed by an integer label.
///
/// The feature count is fixed by the first data row. When `num_classes` is
/// `None` it is inferred as `max label + 1` (at least 2).
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    num_classes: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut dim: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 2 {
            return Err(parse_err(
                line,
                "need at least one feature and a label".into(),
            ));
        }
        let d = record.len() - 1;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(parse_err(
                    line,
                    format!("expected {expected} features, found {d}"),
                ))
            }
            _ => {}
        }
        for (col, field) in record.iter().take(d).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(
                    line,
                    format!("column {}: non-numeric feature `{field}`", col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    line,
                    format!("column {}: non-finite feature", col + 1),
                ));
            }
            values.push(v);
        }
        let label_field = &record[d];
        let label: usize = label_field
            .parse()
            .map_err(|_| parse_err(line, format!("label `{label_field}` is not a class index")))?;
        if let Some(k) = num_classes {
            if label >= k {
                return Err(parse_err(
                    line,
                    format!("label {label} out of range for {k} classes"),
                ));
            }
        }
        labels.push(label);
    }

    let Some(dim) = dim else {
        return Err(Error::EmptyDataset(path.display().to_string()));
    };
    let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(2, |m| (m + 1).max(2)));
    let features = Array2::from_shape_vec((labels.len(), dim), values)
        .map_err(|e| Error::invalid(e.to_string()))?;
    Dataset::new(features, labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            num_classes: 4,
            dim: 5,
            samples_per_class: 250,
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec();
        let (a_train, a_test) = generate(&spec).unwrap();
        let (b_train, b_test) = generate(&spec).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        let other = generate(&DatasetSpec { seed: 43, ..spec }).unwrap().0;
        assert_ne!(a_train, other);
    }

    #[test]
    fn split_sizes_and_balance() {
        let spec = small_spec();
        let (train, test) = generate(&spec).unwrap();
        assert_eq!(train.len(), 800);
        assert_eq!(test.len(), 200);
        let counts: Vec<usize> = train
            .class_counts()
            .iter()
            .zip(test.class_counts())
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(counts, vec![250; 4]);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        // tag each row with a unique feature value to track it through the split
        let n = 50;
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..n).map(|i| i % 2).collect();
        let full = Dataset::new(features, labels, 2).unwrap();
        let (train, test) = split(&full, 0.7, 9).unwrap();
        let mut ids: Vec<usize> = train
            .features
            .column(0)
            .iter()
            .chain(test.features.column(0).iter())
            .map(|&v| v as usize / 2)
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..n).collect::<Vec<_>>());
        assert_eq!(train.len(), 35);
    }

    #[test]
    fn centers_are_orthogonal_or_on_circle() {
        let c = blob_centers(3, 5, 2.0);
        assert_eq!(c[[1, 1]], 2.0);
        assert_eq!(c.row(1).iter().filter(|v| **v != 0.0).count(), 1);
        let c = blob_centers(6, 2, 1.0);
        for row in c.rows() {
            assert!((row[0].hypot(row[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spirals_generate() {
        let spec = DatasetSpec {
            kind: DatasetKind::TwoSpirals,
            num_classes: 2,
            dim: 2,
            samples_per_class: 100,
            ..Default::default()
        };
        let (train, test) = generate(&spec).unwrap();
        assert_eq!(train.len() + test.len(), 200);
    }

    #[test]
    fn spec_validation() {
        let bad = [
            DatasetSpec {
                num_classes: 1,
                ..Default::default()
            },
            DatasetSpec {
                dim: 1,
                ..Default::default()
            },
            DatasetSpec {
                noise_sigma: 0.0,
                ..Default::default()
            },
            DatasetSpec {
                train_fraction: 1.0,
                ..Default::default()
            },
            DatasetSpec {
                kind: DatasetKind::File,
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(generate(&spec).is_err(), "{spec:?}");
        }
    }

    fn csv_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_basic() {
        let f = csv_file("0.5,1.2,0\n-1.0,0.3,1\n");
        let ds = load_csv(f.path(), false, None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels, vec![0, 1]);
        assert_eq!(ds.features[[1, 0]], -1.0);

        let f = csv_file("a,b,label\n0.5,1.2,0\n");
        assert_eq!(load_csv(f.path(), true, Some(3)).unwrap().num_classes, 3);
    }

    #[test]
    fn csv_errors() {
        let f = csv_file("");
        assert!(matches!(
            load_csv(f.path(), false, None),
            Err(Error::EmptyDataset(_))
        ));

        let f = csv_file("0.5,1.2,0\n1.0,2.0,3.0,1\n");
        match load_csv(f.path(), false, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        let f = csv_file("0.5,x,0\n");
        assert!(matches!(
            load_csv(f.path(), false, None),
            Err(Error::Parse { line: 1, .. })
        ));

        let f = csv_file("0.5,1.0,0\n0.5,1.0,5\n");
        assert!(matches!(
            load_csv(f.path(), false, Some(2)),
            Err(Error::Parse { line: 2, .. })
        ));

        assert!(matches!(
            load_csv("/nonexistent/data.csv", false, None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn tensor_round_trip() {
        let (train, _) = generate(&small_spec()).unwrap();
        let t = train.to_tensors("train");
        let back = Dataset::from_tensors(&t[0].1, &t[1].1, 4).unwrap();
        assert_eq!(back, train);
    }
}
