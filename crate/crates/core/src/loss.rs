//! Training objectives.
//!
//! * [`ole_loss`]: `Σ_c ‖Z_c‖_* − ‖Z‖_*`, non-negative and zero exactly
//!   when the class column spaces are mutually orthogonal.
//! * [`predict_distribution`] / [`validation_loss`]: each sample is scored
//!   against every class subspace by `⟨z, p_c⟩ / max(‖p_c‖, eps)` with
//!   `p_c = U_c U_cᵀ z`, scores are normalized into a distribution and the
//!   loss is the mean negative log-probability of the true class.
//! * [`grsvnet_loss`]: OLE on the geometry batch, averaged per sample so
//!   that its scale matches the mean validation loss, plus `λ` times the
//!   validation loss of the validation batch against the geometry batch's
//!   subspaces. The subspace bases are constants for differentiation.
//! * [`softmax_xent`]: the conventional baseline.

use crate::classifier::SubspaceSet;
use crate::data::BatchSplit;
use crate::error::{Error, Result};
use crate::linalg::{
    basis_from_svd, nuclear_norm_with_subgradient, svd_compact, truncation_threshold, Matrix,
};

/// Floor under `‖p_c‖` in the score denominator.
pub const DEFAULT_EPS: f64 = 1e-6;
/// Predicted probabilities of the true class are floored here before the log.
pub const PROB_FLOOR: f64 = 1e-12;
/// Tolerance on `l_g ≥ 0` checked on every evaluation.
pub const OLE_NONNEGATIVE_TOL: f64 = 1e-8;

/// `-ln(PROB_FLOOR)`, the finite stand-in for an infinite cross entropy.
pub fn clamp_ceiling() -> f64 {
    -PROB_FLOOR.ln()
}

#[derive(Debug, Clone)]
pub struct OleLoss {
    pub value: f64,
    pub grad: Matrix,
}

/// Class labels present in `labels`, sorted, with their column indices.
fn groups(labels: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut sorted: Vec<usize> = labels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for c in sorted {
        out.push((
            c,
            labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == c)
                .map(|(i, _)| i)
                .collect(),
        ));
    }
    out
}

fn scatter_columns(dst: &mut Matrix, idx: &[usize], src: &Matrix, sign: f64) {
    for (local, &j) in idx.iter().enumerate() {
        for i in 0..dst.rows() {
            let v = dst.get(i, j) + sign * src.get(i, local);
            dst.set(i, j, v);
        }
    }
}

fn check_labels(z: &Matrix, labels: &[usize], op: &'static str) -> Result<()> {
    if z.cols() != labels.len() {
        return Err(Error::dim(op, z.cols(), labels.len()));
    }
    Ok(())
}

/// OLE loss and a subgradient with respect to `z`, assembled from the
/// canonical per-class subgradients minus the whole-batch one.
pub fn ole_loss(z: &Matrix, labels: &[usize], trunc: f64) -> Result<OleLoss> {
    check_labels(z, labels, "ole_loss")?;
    let (whole, g_whole) = nuclear_norm_with_subgradient(z, trunc)?;
    let mut grad = g_whole.scaled(-1.0);
    let mut per_class = 0.0;
    for (_, idx) in groups(labels) {
        let zc = z.select_columns(&idx);
        let (norm, g) = nuclear_norm_with_subgradient(&zc, trunc)?;
        per_class += norm;
        scatter_columns(&mut grad, &idx, &g, 1.0);
    }
    let value = per_class - whole;
    if value < -OLE_NONNEGATIVE_TOL {
        return Err(Error::Numerical(format!(
            "OLE loss {value:e} is negative beyond tolerance"
        )));
    }
    Ok(OleLoss { value, grad })
}

/// Probabilities over classes `1..=K` for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedDistribution {
    pub probs: Vec<f64>,
    /// Every score was zero, so `probs` is the uniform fallback.
    pub degenerate: bool,
}

impl PredictedDistribution {
    /// Largest probability, ties to the smallest class id. Labels are 1-based.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best + 1
    }
}

struct ClassScore {
    score: f64,
    /// `∂score/∂z` with the basis held fixed.
    grad: Vec<f64>,
}

fn class_scores(
    z: &[f64],
    bases: &SubspaceSet,
    eps: f64,
    with_grad: bool,
) -> Result<Vec<ClassScore>> {
    if z.len() != bases.feature_dim {
        return Err(Error::dim(
            "predict_distribution",
            bases.feature_dim,
            z.len(),
        ));
    }
    bases
        .bases
        .iter()
        .map(|b| {
            let coeff = b.coefficients(z)?;
            if coeff.is_empty() {
                return Ok(ClassScore {
                    score: 0.0,
                    grad: if with_grad {
                        vec![0.0; z.len()]
                    } else {
                        Vec::new()
                    },
                });
            }
            let p = b.u.matvec(&coeff)?;
            let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let zp: f64 = z.iter().zip(&p).map(|(a, b)| a * b).sum();
            let score = zp / p_norm.max(eps);
            let grad = if !with_grad {
                Vec::new()
            } else if p_norm >= eps {
                p.iter().map(|v| v / p_norm).collect()
            } else {
                p.iter().map(|v| 2.0 * v / eps).collect()
            };
            Ok(ClassScore { score, grad })
        })
        .collect()
}

pub fn predict_distribution(
    z: &[f64],
    bases: &SubspaceSet,
    eps: f64,
) -> Result<PredictedDistribution> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let scores = class_scores(z, bases, eps, false)?;
    let total: f64 = scores.iter().map(|s| s.score).sum();
    let k = scores.len();
    if total <= 0.0 {
        return Ok(PredictedDistribution {
            probs: vec![1.0 / k as f64; k],
            degenerate: true,
        });
    }
    Ok(PredictedDistribution {
        probs: scores.iter().map(|s| s.score / total).collect(),
        degenerate: false,
    })
}

#[derive(Debug, Clone)]
pub struct ValidationLoss {
    pub value: f64,
    /// Gradient with respect to the validation features, bases constant.
    pub grad: Matrix,
    /// Samples whose true-class probability hit the floor.
    pub degenerate: usize,
}

/// Mean cross entropy of the validation features against `bases`.
pub fn validation_loss(
    features: &Matrix,
    labels: &[usize],
    bases: &SubspaceSet,
    eps: f64,
) -> Result<ValidationLoss> {
    check_labels(features, labels, "validation_loss")?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Split("empty validation batch".into()));
    }
    let k = bases.classes();
    let mut grad = Matrix::zeros(features.rows(), n);
    let mut value = 0.0;
    let mut degenerate = 0;
    for (j, &y) in labels.iter().enumerate() {
        if y == 0 || y > k {
            return Err(Error::Config(format!("label {y} outside 1..={k}")));
        }
        let z = features.column(j);
        let scores = class_scores(&z, bases, eps, true)?;
        let total: f64 = scores.iter().map(|s| s.score).sum();
        let s_y = scores[y - 1].score;
        let prob = if total > 0.0 { s_y / total } else { 0.0 };
        if prob < PROB_FLOOR {
            value += clamp_ceiling();
            degenerate += 1;
            continue;
        }
        value -= prob.ln();
        // ∂(−ln s_y + ln Σ s_c)/∂z
        let mut g: Vec<f64> = scores[y - 1].grad.iter().map(|v| -v / s_y).collect();
        for s in &scores {
            for (gi, si) in g.iter_mut().zip(&s.grad) {
                *gi += si / total;
            }
        }
        for (i, gi) in g.iter().enumerate() {
            grad.set(i, j, gi / n as f64);
        }
    }
    Ok(ValidationLoss {
        value: value / n as f64,
        grad,
        degenerate,
    })
}

/// `total = geometric + lambda · validation`, where `geometric` is the OLE
/// loss of the geometry batch divided by its size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub geometric: f64,
    pub validation: f64,
    pub lambda: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrsvnetSettings {
    pub lambda: f64,
    pub eps: f64,
    pub ratio: f64,
    pub trunc: f64,
}

impl Default for GrsvnetSettings {
    fn default() -> Self {
        GrsvnetSettings {
            lambda: 5.0,
            eps: DEFAULT_EPS,
            ratio: 0.1,
            trunc: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrsvnetLoss {
    pub breakdown: LossBreakdown,
    /// `∂l_g/∂Zᵍ`
    pub grad_geometry: Matrix,
    /// `λ·∂l_v/∂Zᵛ`
    pub grad_validation: Matrix,
    /// Subspaces built from the geometry features.
    pub bases: SubspaceSet,
    pub degenerate: usize,
}

/// Per-class bases, nuclear norms and subgradients of the geometry batch
/// from one factorization per class.
struct GeometryPass {
    per_class_norm: f64,
    grad: Matrix,
    bases: SubspaceSet,
}

fn geometry_pass(
    z: &Matrix,
    labels: &[usize],
    classes: usize,
    ratio: f64,
    trunc: f64,
) -> Result<GeometryPass> {
    let mut grad = Matrix::zeros(z.rows(), z.cols());
    let mut per_class_norm = 0.0;
    let mut bases = Vec::with_capacity(classes);
    let mut built_from = vec![0; classes];
    let grouped = groups(labels);
    for c in 1..=classes {
        let Some((_, idx)) = grouped.iter().find(|(l, _)| *l == c) else {
            bases.push(crate::linalg::SubspaceBasis::empty(c, z.rows()));
            continue;
        };
        built_from[c - 1] = idx.len();
        let zc = z.select_columns(idx);
        let svd = svd_compact(&zc)?;
        per_class_norm += svd.sigma.iter().sum::<f64>();
        let s = svd.rank_above(truncation_threshold(trunc, svd.sigma[0]));
        if s > 0 {
            let g = svd
                .u
                .leading_columns(s)
                .matmul_tr(&svd.v.leading_columns(s))?;
            scatter_columns(&mut grad, idx, &g, 1.0);
        }
        bases.push(basis_from_svd(&svd, ratio, z.rows()).with_class_id(c));
    }
    Ok(GeometryPass {
        per_class_norm,
        grad,
        bases: SubspaceSet::new(bases, built_from)?,
    })
}

/// Subspaces of the geometry features, built with the same rule as in
/// [`grsvnet_loss`].
pub fn geometry_bases(
    features: &Matrix,
    labels: &[usize],
    classes: usize,
    ratio: f64,
) -> Result<SubspaceSet> {
    check_labels(features, labels, "geometry_bases")?;
    Ok(geometry_pass(features, labels, classes, ratio, 1e-6)?.bases)
}

/// Loss of one split batch. When `frozen` is given the validation term is
/// evaluated against those bases instead of the ones built from
/// `features_g`; gradients are identical either way since bases are
/// constants.
pub fn grsvnet_loss(
    split: &BatchSplit,
    features_g: &Matrix,
    features_v: &Matrix,
    settings: &GrsvnetSettings,
    frozen: Option<&SubspaceSet>,
) -> Result<GrsvnetLoss> {
    if !(settings.lambda > 0.0) {
        return Err(Error::Config(format!(
            "lambda must be positive, got {}",
            settings.lambda
        )));
    }
    if !(settings.ratio > 0.0 && settings.ratio <= 1.0) {
        return Err(Error::Config(format!(
            "ratio must lie in (0, 1], got {}",
            settings.ratio
        )));
    }
    if features_g.cols() != split.geometry.len() || features_v.cols() != split.validation.len() {
        return Err(Error::dim(
            "grsvnet_loss",
            format!(
                "{} / {} columns",
                split.geometry.len(),
                split.validation.len()
            ),
            format!("{} / {}", features_g.cols(), features_v.cols()),
        ));
    }
    if features_g.rows() != features_v.rows() {
        return Err(Error::dim(
            "grsvnet_loss",
            features_g.rows(),
            features_v.rows(),
        ));
    }
    let classes = split.classes();
    if let Some(c) = split.validation.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::Config(format!(
            "class {} missing from the validation batch",
            c + 1
        )));
    }

    let geo = geometry_pass(
        features_g,
        &split.geometry.y,
        classes,
        settings.ratio,
        settings.trunc,
    )?;
    let (whole, g_whole) = nuclear_norm_with_subgradient(features_g, settings.trunc)?;
    let ole = geo.per_class_norm - whole;
    if ole < -OLE_NONNEGATIVE_TOL {
        return Err(Error::Numerical(format!(
            "OLE loss {ole:e} is negative beyond tolerance"
        )));
    }
    let per_sample = 1.0 / features_g.cols() as f64;
    let geometric = ole * per_sample;
    let grad_geometry = geo.grad.sub(&g_whole)?.scaled(per_sample);

    let bases = frozen.unwrap_or(&geo.bases);
    let val = validation_loss(features_v, &split.validation.y, bases, settings.eps)?;
    let total = geometric + settings.lambda * val.value;
    Ok(GrsvnetLoss {
        breakdown: LossBreakdown {
            geometric,
            validation: val.value,
            lambda: settings.lambda,
            total,
        },
        grad_geometry,
        grad_validation: val.grad.scaled(settings.lambda),
        bases: geo.bases,
        degenerate: val.degenerate,
    })
}

thread_local! {
    static SOFTMAX_CALLS: std::cell::Cell<u64> = const { std::cell::Cell::new(0) };
}

/// Number of [`softmax_xent`] evaluations on the current thread so far.
pub fn softmax_call_count() -> u64 {
    SOFTMAX_CALLS.with(std::cell::Cell::get)
}

/// Mean softmax cross entropy of `K × N` logits; gradient `(softmax − onehot)/N`.
pub fn softmax_xent(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    SOFTMAX_CALLS.with(|c| c.set(c.get() + 1));
    check_labels(logits, labels, "softmax_xent")?;
    let (k, n) = logits.shape();
    if n == 0 {
        return Ok((0.0, Matrix::zeros(k, 0)));
    }
    let mut grad = Matrix::zeros(k, n);
    let mut value = 0.0;
    for (j, &y) in labels.iter().enumerate() {
        if y == 0 || y > k {
            return Err(Error::Config(format!("label {y} outside 1..={k}")));
        }
        let max = (0..k)
            .map(|i| logits.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = (0..k).map(|i| (logits.get(i, j) - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        value += sum.ln() + max - logits.get(y - 1, j);
        for (i, e) in exps.iter().enumerate() {
            let onehot = if i == y - 1 { 1.0 } else { 0.0 };
            grad.set(i, j, (e / sum - onehot) / n as f64);
        }
    }
    Ok((value / n as f64, grad))
}
