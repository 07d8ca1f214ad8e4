//! Post-training subspace classifier.
//!
//! Training features of each class are summarized by an orthonormal basis
//! of their dominant column space; a feature is assigned to the class with
//! the highest projection score.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{derive_seed, format_real, LabeledBatch};
use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, Matrix, SubspaceBasis};
use crate::loss::{predict_distribution, PredictedDistribution};

/// One basis per class `1..=K`, all in the same feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSet {
    /// `bases[c - 1]` belongs to class `c`.
    pub bases: Vec<SubspaceBasis>,
    pub feature_dim: usize,
    /// Samples per class the bases were built from.
    pub built_from: Vec<usize>,
}

impl SubspaceSet {
    pub fn new(bases: Vec<SubspaceBasis>, built_from: Vec<usize>) -> Result<Self> {
        let Some(first) = bases.first() else {
            return Err(Error::Config(
                "a subspace set needs at least one class".into(),
            ));
        };
        let feature_dim = first.feature_dim();
        for (k, b) in bases.iter().enumerate() {
            if b.class_id != k + 1 {
                return Err(Error::Config(format!(
                    "basis at position {k} has class id {}, expected {}",
                    b.class_id,
                    k + 1
                )));
            }
            if b.feature_dim() != feature_dim {
                return Err(Error::dim("SubspaceSet::new", feature_dim, b.feature_dim()));
            }
        }
        if built_from.len() != bases.len() {
            return Err(Error::dim(
                "SubspaceSet::new",
                bases.len(),
                built_from.len(),
            ));
        }
        Ok(SubspaceSet {
            bases,
            feature_dim,
            built_from,
        })
    }

    pub fn classes(&self) -> usize {
        self.bases.len()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.bases.iter().map(SubspaceBasis::rank).collect()
    }

    /// CSV rows `class_id,column_index,u_0..u_{d-1}`, one per basis vector.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("class_id,column_index");
        for i in 0..self.feature_dim {
            out.push_str(&format!(",u_{i}"));
        }
        out.push('\n');
        for b in &self.bases {
            for k in 0..b.rank() {
                out.push_str(&format!("{},{}", b.class_id, k));
                for i in 0..self.feature_dim {
                    out.push(',');
                    out.push_str(&format_real(b.u.get(i, k)));
                }
                out.push('\n');
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Builds one basis per class with the `σᵢ ≥ ratio · σ₁` rule.
/// `features_by_class[c - 1]` holds the features of class `c` as columns.
pub fn fit(features_by_class: &[Matrix], ratio: f64) -> Result<SubspaceSet> {
    let mut bases = Vec::with_capacity(features_by_class.len());
    for (k, z) in features_by_class.iter().enumerate() {
        if z.cols() == 0 {
            return Err(Error::Config(format!(
                "class {} has no features to fit",
                k + 1
            )));
        }
        bases.push(orthonormal_basis(z, ratio)?.with_class_id(k + 1));
    }
    SubspaceSet::new(bases, features_by_class.iter().map(Matrix::cols).collect())
}

/// Fits on the features of a labeled batch, optionally on a random
/// `portion` of each class (at least one sample per class).
pub fn fit_batch(
    features: &Matrix,
    labels: &LabeledBatch,
    ratio: f64,
    portion: f64,
    seed: u64,
) -> Result<SubspaceSet> {
    if features.cols() != labels.len() {
        return Err(Error::dim("fit_batch", labels.len(), features.cols()));
    }
    if !(portion > 0.0 && portion <= 1.0) {
        return Err(Error::Config(format!(
            "fit portion must lie in (0, 1], got {portion}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xF17]));
    let per_class: Vec<Matrix> = labels
        .class_indices()
        .into_iter()
        .map(|mut idx| {
            if portion < 1.0 && !idx.is_empty() {
                idx.shuffle(&mut rng);
                let keep = ((portion * idx.len() as f64).round() as usize).max(1);
                idx.truncate(keep);
                idx.sort_unstable();
            }
            features.select_columns(&idx)
        })
        .collect();
    fit(&per_class, ratio)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// 1-based class id.
    pub label: usize,
    pub distribution: PredictedDistribution,
}

/// Highest-probability class, ties to the smallest id. A degenerate
/// (all-zero score) feature still gets a label, class 1.
pub fn predict(set: &SubspaceSet, z: &[f64], eps: f64) -> Result<Prediction> {
    let distribution = predict_distribution(z, set, eps)?;
    Ok(Prediction {
        label: distribution.argmax(),
        distribution,
    })
}

/// Labels of every column of `features`.
pub fn predict_all(set: &SubspaceSet, features: &Matrix, eps: f64) -> Result<Vec<Prediction>> {
    (0..features.cols())
        .map(|j| predict(set, &features.column(j), eps))
        .collect()
}

/// Fraction of columns whose predicted label matches.
pub fn accuracy(set: &SubspaceSet, features: &Matrix, labels: &[usize], eps: f64) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let preds = predict_all(set, features, eps)?;
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(p, &y)| p.label == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::DEFAULT_EPS;

    fn axis_features() -> Vec<Matrix> {
        // class 1 on e1/e2, class 2 on e3, class 3 on e4
        vec![
            Matrix::from_vec(
                4,
                3,
                vec![1.0, 0.0, 2.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            )
            .unwrap(),
            Matrix::from_vec(4, 2, vec![0.0, 0.0, 0.0, 0.0, 3.0, -1.0, 0.0, 0.0]).unwrap(),
            Matrix::from_vec(4, 1, vec![0.0, 0.0, 0.0, 2.0]).unwrap(),
        ]
    }

    #[test]
    fn fits_and_recovers_training_labels() {
        let feats = axis_features();
        let set = fit(&feats, 0.1).unwrap();
        assert_eq!(set.ranks(), vec![2, 1, 1]);
        assert_eq!(set.built_from, vec![3, 2, 1]);
        for (c, z) in feats.iter().enumerate() {
            for j in 0..z.cols() {
                assert_eq!(
                    predict(&set, &z.column(j), DEFAULT_EPS).unwrap().label,
                    c + 1
                );
            }
        }
    }

    #[test]
    fn single_sample_basis_is_normalized_feature() {
        let set = fit(&axis_features(), 0.1).unwrap();
        let b = &set.bases[2];
        assert_eq!(b.rank(), 1);
        assert!((b.u.get(3, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_feature_gets_class_one() {
        let set = fit(&axis_features(), 0.1).unwrap();
        let p = predict(&set, &[0.0; 4], DEFAULT_EPS).unwrap();
        assert_eq!(p.label, 1);
        assert!(p.distribution.degenerate);
        assert_eq!(
            predict(&set, &[0.0, 0.0, 5.0, 0.0], DEFAULT_EPS)
                .unwrap()
                .label,
            2
        );
    }

    #[test]
    fn empty_class_rejected() {
        let mut feats = axis_features();
        feats[1] = Matrix::zeros(4, 0);
        assert!(matches!(fit(&feats, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn csv_export_lists_every_basis_vector() {
        let set = fit(&axis_features(), 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bases.csv");
        set.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "class_id,column_index,u_0,u_1,u_2,u_3");
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[4].starts_with("3,0,"));
    }
}
