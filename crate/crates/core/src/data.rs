//! Synthetic datasets and batch plumbing.
//!
//! `subspace_gaussian` draws class `c` from a normal distribution whose
//! standard deviation is `amplification` along coordinate `c` and 1
//! elsewhere, so each class concentrates near one coordinate axis.
//! `gaussian_noise` draws isotropic unit normals with uniformly random
//! labels. Samples are fed raw, with no centering or scaling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Feature matrix with one column per sample and labels in `1..=classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub classes: usize,
}

impl LabeledBatch {
    pub fn new(x: Matrix, y: Vec<usize>, classes: usize) -> Result<Self> {
        if x.cols() != y.len() {
            return Err(Error::dim("LabeledBatch::new", x.cols(), y.len()));
        }
        if let Some(bad) = y.iter().find(|&&l| l == 0 || l > classes) {
            return Err(Error::Config(format!("label {bad} outside 1..={classes}")));
        }
        Ok(LabeledBatch { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    /// Sample count per class, index `c - 1` for class `c`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.y {
            counts[l - 1] += 1;
        }
        counts
    }

    /// Column indices of each class, index `c - 1` for class `c`.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut idx = vec![Vec::new(); self.classes];
        for (i, &l) in self.y.iter().enumerate() {
            idx[l - 1].push(i);
        }
        idx
    }

    pub fn select(&self, idx: &[usize]) -> LabeledBatch {
        LabeledBatch {
            x: self.x.select_columns(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn concat(&self, other: &LabeledBatch) -> Result<LabeledBatch> {
        let x = self.x.hconcat(&other.x)?;
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        LabeledBatch::new(x, y, self.classes.max(other.classes))
    }

    /// Writes `sample_id,label,x_0..x_{d-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend((0..self.dim()).map(|i| format!("x_{i}")));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for j in 0..self.len() {
            let mut rec = vec![j.to_string(), self.y[j].to_string()];
            rec.extend((0..self.dim()).map(|i| format_real(self.x.get(i, j))));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the format produced by [`LabeledBatch::write_csv`]. The class
    /// count is the largest label present.
    pub fn read_csv(path: &Path) -> Result<LabeledBatch> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
        if header.len() < 3 || &header[0] != "sample_id" || &header[1] != "label" {
            return Err(Error::Parse {
                path: path.into(),
                message: "expected header sample_id,label,x_0,...".into(),
            });
        }
        let dim = header.len() - 2;
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut y = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let parse_err = |what: &str| Error::Parse {
                path: path.into(),
                message: format!("row {}: bad {what}", line + 1),
            };
            let label: usize = rec[1].trim().parse().map_err(|_| parse_err("label"))?;
            let x = rec
                .iter()
                .skip(2)
                .map(|s| s.trim().parse::<f64>().map_err(|_| parse_err("value")))
                .collect::<Result<Vec<_>>>()?;
            y.push(label);
            cols.push(x);
        }
        let classes = y.iter().copied().max().unwrap_or(0);
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let x = Matrix::from_columns(dim, &refs)?;
        LabeledBatch::new(x, y, classes)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        message: e.to_string(),
    }
}

/// Shortest representation that parses back to the same value.
pub(crate) fn format_real(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    SubspaceGaussian,
    GaussianNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    True,
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    #[serde(alias = "K")]
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    #[serde(default = "default_amplification")]
    pub amplification: f64,
    pub label_mode: LabelMode,
    pub seed: u64,
    #[serde(default)]
    pub test_fraction: f64,
}

fn default_amplification() -> f64 {
    50.0
}

impl DatasetSpec {
    /// Three one-dimensional classes in R¹⁰, 500 points each.
    pub fn toy(label_mode: LabelMode, seed: u64) -> Self {
        DatasetSpec {
            kind: DatasetKind::SubspaceGaussian,
            classes: 3,
            per_class: 500,
            dim: 10,
            amplification: 50.0,
            label_mode,
            seed,
            test_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::Config(
                "dataset needs at least one class and dimension".into(),
            ));
        }
        if self.per_class == 0 {
            return Err(Error::Config("per_class must be at least 1".into()));
        }
        if !(self.amplification > 0.0) {
            return Err(Error::Config(format!(
                "amplification must be positive, got {}",
                self.amplification
            )));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!(
                "test_fraction must lie in [0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.kind == DatasetKind::SubspaceGaussian && self.classes > self.dim {
            return Err(Error::Config(format!(
                "subspace_gaussian needs classes <= dim, got {} > {}",
                self.classes, self.dim
            )));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer used to derive independent stream seeds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base;
    for &p in parts {
        h = h
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

const STREAM_SAMPLES: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_TEST: u64 = 4;
const STREAM_EPOCH: u64 = 5;
const STREAM_SPLIT: u64 = 6;

/// Returns `(train, test)`; `test` is empty when `test_fraction` is 0.
pub fn generate(spec: &DatasetSpec) -> Result<(LabeledBatch, LabeledBatch)> {
    spec.validate()?;
    let n = spec.classes * spec.per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[STREAM_SAMPLES]));
    let mut x = Matrix::zeros(spec.dim, n);
    let mut y = Vec::with_capacity(n);
    match spec.kind {
        DatasetKind::SubspaceGaussian => {
            for c in 0..spec.classes {
                for k in 0..spec.per_class {
                    let j = c * spec.per_class + k;
                    for i in 0..spec.dim {
                        let std = if i == c { spec.amplification } else { 1.0 };
                        let g: f64 = rng.sample(StandardNormal);
                        x.set(i, j, std * g);
                    }
                    y.push(c + 1);
                }
            }
        }
        DatasetKind::GaussianNoise => {
            for j in 0..n {
                for i in 0..spec.dim {
                    x.set(i, j, rng.sample(StandardNormal));
                }
            }
            let mut lrng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[STREAM_LABELS]));
            y.extend((0..n).map(|_| lrng.gen_range(1..=spec.classes)));
        }
    }
    if spec.label_mode == LabelMode::Shuffled {
        let mut srng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[STREAM_SHUFFLE]));
        y.shuffle(&mut srng);
    }
    let all = LabeledBatch::new(x, y, spec.classes)?;
    if spec.test_fraction == 0.0 {
        let empty = LabeledBatch::new(Matrix::zeros(spec.dim, 0), Vec::new(), spec.classes)?;
        return Ok((all, empty));
    }
    let mut trng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[STREAM_TEST]));
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for mut members in all.class_indices() {
        members.shuffle(&mut trng);
        let n_test = (spec.test_fraction * members.len() as f64).round() as usize;
        test_idx.extend_from_slice(&members[..n_test]);
        train_idx.extend_from_slice(&members[n_test..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((all.select(&train_idx), all.select(&test_idx)))
}

/// Geometry and validation sub-batches of one training batch. Every class
/// of the task is present in the validation batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSplit {
    pub geometry: LabeledBatch,
    pub validation: LabeledBatch,
}

impl BatchSplit {
    pub fn new(geometry: LabeledBatch, validation: LabeledBatch) -> Result<Self> {
        if geometry.classes != validation.classes || geometry.dim() != validation.dim() {
            return Err(Error::Split(
                "geometry and validation batches disagree on shape".into(),
            ));
        }
        if let Some(c) = validation.class_counts().iter().position(|&n| n == 0) {
            return Err(Error::Split(format!(
                "class {} missing from the validation batch",
                c + 1
            )));
        }
        if geometry.is_empty() {
            return Err(Error::Split("empty geometry batch".into()));
        }
        Ok(BatchSplit {
            geometry,
            validation,
        })
    }

    pub fn classes(&self) -> usize {
        self.validation.classes
    }

    /// Both halves as one batch, geometry first.
    pub fn merged(&self) -> LabeledBatch {
        self.geometry
            .concat(&self.validation)
            .expect("split halves share dim and classes")
    }
}

/// Partitions every class between a geometry and a validation batch, with
/// roughly `g_fraction` of each class going to geometry and at least one
/// sample of each class on either side.
pub fn stratified_split(batch: &LabeledBatch, g_fraction: f64, seed: u64) -> Result<BatchSplit> {
    if !(g_fraction > 0.0 && g_fraction < 1.0) {
        return Err(Error::Config(format!(
            "g_fraction must lie in (0, 1), got {g_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_SPLIT]));
    let mut g_idx = Vec::new();
    let mut v_idx = Vec::new();
    for (c, mut members) in batch.class_indices().into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::Split(format!(
                "class {} has {} sample(s); both sub-batches need one",
                c + 1,
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_g =
            ((g_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        g_idx.extend_from_slice(&members[..n_g]);
        v_idx.extend_from_slice(&members[n_g..]);
    }
    g_idx.sort_unstable();
    v_idx.sort_unstable();
    BatchSplit::new(batch.select(&g_idx), batch.select(&v_idx))
}

/// Batches of one epoch, plus the samples left out because their batch
/// could not give every class two samples.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    pub splits: Vec<BatchSplit>,
    /// Source indices of each emitted split, geometry first then validation.
    pub members: Vec<Vec<usize>>,
    pub dropped: Vec<usize>,
}

/// Class-stratified shuffled batches of at most `batch_size` samples.
///
/// Each class is shuffled and dealt round-robin over
/// `ceil(N / batch_size)` batches, so batch sizes differ by at most one
/// and class proportions follow the training set.
pub fn epoch_batches(
    train: &LabeledBatch,
    batch_size: usize,
    g_fraction: f64,
    seed: u64,
    epoch_index: usize,
) -> Result<EpochPlan> {
    let n = train.len();
    if batch_size == 0 || batch_size > n {
        return Err(Error::Config(format!(
            "batch_size must lie in 1..={n}, got {batch_size}"
        )));
    }
    let n_batches = n.div_ceil(batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_EPOCH, epoch_index as u64]));
    let mut bins: Vec<Vec<usize>> = vec![Vec::with_capacity(batch_size); n_batches];
    let mut slot = rng.gen_range(0..n_batches);
    for mut members in train.class_indices() {
        members.shuffle(&mut rng);
        for i in members {
            bins[slot].push(i);
            slot = (slot + 1) % n_batches;
        }
    }
    bins.shuffle(&mut rng);

    let mut splits = Vec::with_capacity(n_batches);
    let mut members = Vec::with_capacity(n_batches);
    let mut dropped = Vec::new();
    for (b, mut idx) in bins.into_iter().enumerate() {
        idx.sort_unstable();
        let batch = train.select(&idx);
        if batch.class_counts().iter().any(|&c| c < 2) {
            dropped.extend_from_slice(&idx);
            continue;
        }
        let split_seed = derive_seed(seed, &[STREAM_EPOCH, epoch_index as u64, b as u64]);
        let split = stratified_split(&batch, g_fraction, split_seed)?;
        members.push(split_members(&batch, &idx, &split));
        splits.push(split);
    }
    if !dropped.is_empty() {
        log::debug!(
            "epoch {epoch_index}: dropped {} sample(s) in batches lacking two samples per class",
            dropped.len()
        );
    }
    Ok(EpochPlan {
        splits,
        members,
        dropped,
    })
}

/// Recovers source indices of a split by replaying its membership.
fn split_members(batch: &LabeledBatch, source: &[usize], split: &BatchSplit) -> Vec<usize> {
    // Columns are unique per source sample; match by (label, column bits).
    let key = |x: &Matrix, j: usize, y: usize| {
        let mut k: Vec<u64> = (0..x.rows()).map(|i| x.get(i, j).to_bits()).collect();
        k.push(y as u64);
        k
    };
    let mut lookup: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (j, &src) in source.iter().enumerate() {
        lookup
            .entry(key(&batch.x, j, batch.y[j]))
            .or_default()
            .push(src);
    }
    let mut out = Vec::with_capacity(source.len());
    for half in [&split.geometry, &split.validation] {
        for j in 0..half.len() {
            let list = lookup
                .get_mut(&key(&half.x, j, half.y[j]))
                .expect("split column comes from batch");
            out.push(list.remove(0));
        }
    }
    out
}
