//! Feature dumps with a three-component principal projection for 3-D
//! visualization.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{format_real, LabeledBatch};
use crate::error::{Error, Result};
use crate::linalg::{gemm, symmetric_eigen, Matrix, Trans};
use crate::net::MlpParams;

use super::config::Mode;
use super::objective::extract_features;

pub const PCA_COMPONENTS: usize = 3;
const MAX_ITERATIONS: usize = 5000;
const RESIDUAL_TOL: f64 = 1e-12;

/// Leading principal directions of a feature set.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `d × 3` orthonormal directions, by decreasing variance. Directions
    /// beyond the feature dimension are zero columns.
    pub components: Matrix,
    /// Variance captured by each component.
    pub variances: Vec<f64>,
    pub total_variance: f64,
}

impl Pca {
    /// Fraction of the total variance captured by the components; 1 for a
    /// constant feature set.
    pub fn explained_variance(&self) -> f64 {
        if self.total_variance <= 0.0 {
            1.0
        } else {
            (self.variances.iter().sum::<f64>() / self.total_variance).min(1.0)
        }
    }

    /// `3 × N` projections of the centered columns of `z`.
    pub fn project(&self, z: &Matrix) -> Result<Matrix> {
        gemm(
            1.0,
            &self.components,
            Trans::Yes,
            &center(z, &self.mean),
            Trans::No,
        )
    }
}

fn center(z: &Matrix, mean: &[f64]) -> Matrix {
    Matrix::from_fn(z.rows(), z.cols(), |i, j| z.get(i, j) - mean[i])
}

/// Modified Gram-Schmidt; a column that collapses is replaced by the first
/// coordinate axis independent of the previous ones.
fn orthonormalize(q: &mut Matrix) {
    let (d, p) = q.shape();
    for k in 0..p {
        for attempt in 0..=d {
            for prev in 0..k {
                let dot: f64 = (0..d).map(|i| q.get(i, prev) * q.get(i, k)).sum();
                for i in 0..d {
                    q.set(i, k, q.get(i, k) - dot * q.get(i, prev));
                }
            }
            let norm = (0..d).map(|i| q.get(i, k).powi(2)).sum::<f64>().sqrt();
            if norm > 1e-10 {
                for i in 0..d {
                    q.set(i, k, q.get(i, k) / norm);
                }
                break;
            }
            let axis = attempt % d;
            for i in 0..d {
                q.set(i, k, (i == axis) as u8 as f64);
            }
        }
    }
}

/// Block power iteration on the centered covariance followed by a
/// Rayleigh–Ritz step, until every kept Ritz pair has a residual below
/// `1e-12 · λ₁`.
pub fn pca(z: &Matrix) -> Result<Pca> {
    let (d, n) = z.shape();
    if n == 0 || d == 0 {
        return Err(Error::dim(
            "pca",
            "non-empty feature matrix",
            format!("{d}x{n}"),
        ));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("pca"));
    }
    let mean: Vec<f64> = (0..d)
        .map(|i| (0..n).map(|j| z.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let zc = center(z, &mean);
    let cov = gemm(1.0 / n as f64, &zc, Trans::No, &zc, Trans::Yes)?;
    let total_variance: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    let keep = PCA_COMPONENTS.min(d);
    let block = (PCA_COMPONENTS + 5).min(d);

    let mut rng = ChaCha8Rng::seed_from_u64(0x9CA);
    let mut q = Matrix::from_fn(d, block, |_, _| rng.gen_range(-1.0..1.0));
    orthonormalize(&mut q);
    let mut ritz_values = vec![0.0; block];
    let mut ritz_vectors = q.clone();
    for _ in 0..MAX_ITERATIONS {
        let cq = cov.matmul(&q)?;
        let small = q.tr_matmul(&cq)?;
        let ev = symmetric_eigen(&small)?;
        ritz_vectors = q.matmul(&ev.vectors)?;
        ritz_values = ev.values;
        let c_ritz = cq.matmul(&ev.vectors)?;
        let scale = ritz_values[0].abs().max(f64::MIN_POSITIVE);
        let converged = (0..keep).all(|k| {
            let r = (0..d)
                .map(|i| (c_ritz.get(i, k) - ritz_values[k] * ritz_vectors.get(i, k)).powi(2))
                .sum::<f64>()
                .sqrt();
            r <= RESIDUAL_TOL * scale
        });
        if converged {
            break;
        }
        q = c_ritz;
        orthonormalize(&mut q);
    }
    let mut components = Matrix::zeros(d, PCA_COMPONENTS);
    for k in 0..keep {
        for i in 0..d {
            components.set(i, k, ritz_vectors.get(i, k));
        }
    }
    let mut variances: Vec<f64> = ritz_values.iter().take(keep).map(|v| v.max(0.0)).collect();
    variances.resize(PCA_COMPONENTS, 0.0);
    Ok(Pca {
        mean,
        components,
        variances,
        total_variance,
    })
}

#[derive(Debug, Clone)]
pub struct FeatureExport {
    pub pca: Pca,
    pub samples: usize,
    pub feature_dim: usize,
}

/// Writes `label,f_0..f_{m-1},pc1,pc2,pc3`, one row per column of
/// `features`.
pub fn write_feature_csv(
    features: &Matrix,
    labels: &[usize],
    path: &Path,
) -> Result<FeatureExport> {
    if features.cols() != labels.len() {
        return Err(Error::dim(
            "write_feature_csv",
            labels.len(),
            features.cols(),
        ));
    }
    let pca = pca(features)?;
    let proj = pca.project(features)?;
    let m = features.rows();
    let mut out = String::from("label");
    for i in 0..m {
        out.push_str(&format!(",f_{i}"));
    }
    out.push_str(",pc1,pc2,pc3\n");
    for (j, y) in labels.iter().enumerate() {
        out.push_str(&y.to_string());
        for i in 0..m {
            out.push(',');
            out.push_str(&format_real(features.get(i, j)));
        }
        for k in 0..PCA_COMPONENTS {
            out.push(',');
            out.push_str(&format_real(proj.get(k, j)));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    Ok(FeatureExport {
        pca,
        samples: labels.len(),
        feature_dim: m,
    })
}

/// Features learned by a trained network on `batch`, written with
/// [`write_feature_csv`].
pub fn export_features(
    params: &MlpParams,
    mode: Mode,
    batch: &LabeledBatch,
    path: &Path,
) -> Result<FeatureExport> {
    let z = extract_features(params, mode, &batch.x)?;
    write_feature_csv(&z, &batch.y, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank3(n: usize) -> Matrix {
        // columns drawn from a 3-dimensional affine subspace of R⁶
        let basis = [
            [1.0, 0.0, 2.0, 0.0, -1.0, 0.5],
            [0.0, 1.0, 0.0, 3.0, 0.0, 1.0],
            [2.0, -1.0, 0.0, 0.0, 1.0, 0.0],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coeff: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-0.2..0.2),
                ]
            })
            .collect();
        Matrix::from_fn(6, n, |i, j| {
            5.0 + (0..3).map(|k| coeff[j][k] * basis[k][i]).sum::<f64>()
        })
    }

    #[test]
    fn rank_three_features_are_fully_explained() {
        let p = pca(&rank3(200)).unwrap();
        assert!((p.explained_variance() - 1.0).abs() < 1e-6);
        let ctc = p.components.tr_matmul(&p.components).unwrap();
        assert!(ctc.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-10);
        assert!(p.variances.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projections_are_uncorrelated() {
        let z = rank3(150);
        let p = pca(&z).unwrap();
        let proj = p.project(&z).unwrap();
        let gram = proj.matmul_tr(&proj).unwrap().scaled(1.0 / 150.0);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert!(gram.get(a, b).abs() < 1e-8 * p.variances[0]);
                }
            }
        }
    }

    #[test]
    fn narrow_features_pad_components() {
        let z = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 0.0, 1.0, 0.0]).unwrap();
        let p = pca(&z).unwrap();
        assert_eq!(p.components.shape(), (2, 3));
        assert_eq!(p.variances[2], 0.0);
        assert!((p.explained_variance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_feature_and_projection_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let z = rank3(10);
        let labels: Vec<usize> = (0..10).map(|j| j % 2 + 1).collect();
        write_feature_csv(&z, &labels, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "label,f_0,f_1,f_2,f_3,f_4,f_5,pc1,pc2,pc3"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 10);
        assert_eq!(first[0], "1");
    }
}
