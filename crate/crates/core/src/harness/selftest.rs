//! Randomized property suites, runnable from the command line as a quick
//! health check of an installation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    derive_seed, stratified_split, BatchSplit, DatasetSpec, LabelMode, LabeledBatch,
};
use crate::error::Result;
use crate::linalg::{nuclear_norm, nuclear_norm_subgradient, Matrix};
use crate::loss::{geometry_bases, grsvnet_loss, GrsvnetSettings};
use crate::net::{xavier_init, MlpParams};

use super::config::{Mode, TrainConfig};
use super::objective::{batch_objective, with_weight_decay};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Worst value of the suite's statistic.
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}/{} cases within tolerance {:e} (worst {:e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases - self.failures,
            self.cases,
            self.tolerance,
            self.worst
        )
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// `m × m` orthogonal matrix from Gram-Schmidt on a random square.
fn random_orthogonal(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
    loop {
        let mut q = random_matrix(rng, m, m);
        let mut ok = true;
        for k in 0..m {
            for p in 0..k {
                let dot: f64 = (0..m).map(|i| q.get(i, p) * q.get(i, k)).sum();
                for i in 0..m {
                    q.set(i, k, q.get(i, k) - dot * q.get(i, p));
                }
            }
            let norm = (0..m).map(|i| q.get(i, k).powi(2)).sum::<f64>().sqrt();
            if norm < 1e-3 {
                ok = false;
                break;
            }
            for i in 0..m {
                q.set(i, k, q.get(i, k) / norm);
            }
        }
        if ok {
            return q;
        }
    }
}

/// `‖[A, B]‖_* ≤ ‖A‖_* + ‖B‖_*` on random pairs.
pub fn subadditivity_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let tol = 1e-8;
    let (mut failures, mut worst) = (0, f64::NEG_INFINITY);
    for _ in 0..cases {
        let m = rng.gen_range(1..=12);
        let a = {
            let n = rng.gen_range(1..=8);
            random_matrix(&mut rng, m, n)
        };
        let b = {
            let n = rng.gen_range(1..=8);
            random_matrix(&mut rng, m, n)
        };
        let excess = nuclear_norm(&a.hconcat(&b)?)? - nuclear_norm(&a)? - nuclear_norm(&b)?;
        worst = worst.max(excess);
        failures += usize::from(excess > tol);
    }
    Ok(SuiteReport {
        name: "nuclear norm subadditivity",
        cases,
        failures,
        worst,
        tolerance: tol,
    })
}

/// Pairs with orthogonal column spaces attain equality.
pub fn orthogonal_equality_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
    let tol = 1e-7;
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let m = rng.gen_range(2..=12);
        let q = random_orthogonal(&mut rng, m);
        let split = rng.gen_range(1..m);
        let ca = {
            let n = rng.gen_range(1..=8);
            random_matrix(&mut rng, split, n)
        };
        let cb = {
            let n = rng.gen_range(1..=8);
            random_matrix(&mut rng, m - split, n)
        };
        let a = q.leading_columns(split).matmul(&ca)?;
        let qb = Matrix::from_fn(m, m - split, |i, j| q.get(i, split + j));
        let b = qb.matmul(&cb)?;
        let gap = (nuclear_norm(&a)? + nuclear_norm(&b)? - nuclear_norm(&a.hconcat(&b)?)?).abs();
        worst = worst.max(gap);
        failures += usize::from(gap > tol);
    }
    Ok(SuiteReport {
        name: "orthogonal pairs attain equality",
        cases,
        failures,
        worst,
        tolerance: tol,
    })
}

/// Pairs with `‖AᵀB‖_F ≥ 0.1` leave a strictly positive gap.
pub fn overlap_gap_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
    let tol = 1e-6;
    let (mut failures, mut worst, mut done) = (0, f64::INFINITY, 0);
    while done < cases {
        let m = rng.gen_range(1..=12);
        let a = {
            let n = rng.gen_range(1..=8);
            random_matrix(&mut rng, m, n)
        };
        let b = {
            let n = rng.gen_range(1..=8);
            random_matrix(&mut rng, m, n)
        };
        if a.tr_matmul(&b)?.frobenius_norm() < 0.1 {
            continue;
        }
        done += 1;
        let gap = nuclear_norm(&a)? + nuclear_norm(&b)? - nuclear_norm(&a.hconcat(&b)?)?;
        worst = worst.min(gap);
        failures += usize::from(gap <= tol);
    }
    Ok(SuiteReport {
        name: "overlapping pairs leave a gap",
        cases,
        failures,
        worst,
        tolerance: tol,
    })
}

/// Directional derivative of the nuclear norm at full-rank points versus
/// `⟨U Vᵀ, E⟩`, as a relative error.
pub fn subgradient_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[4]));
    let (tol, h) = (1e-4, 1e-6);
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let m = rng.gen_range(1..=10);
        let n = rng.gen_range(1..=10);
        let x = random_matrix(&mut rng, m, n);
        let e = random_matrix(&mut rng, m, n);
        let g = nuclear_norm_subgradient(&x, 1e-6)?;
        let mut plus = x.clone();
        plus.axpy(h, &e)?;
        let mut minus = x.clone();
        minus.axpy(-h, &e)?;
        let fd = (nuclear_norm(&plus)? - nuclear_norm(&minus)?) / (2.0 * h);
        let an = g.dot(&e);
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max(rel);
        failures += usize::from(rel > tol);
    }
    Ok(SuiteReport {
        name: "nuclear norm subgradient vs finite differences",
        cases,
        failures,
        worst,
        tolerance: tol,
    })
}

/// A 12-sample, 3-class batch and a small 3-hidden-layer network for
/// `mode`.
pub fn gradient_fixture(mode: Mode, seed: u64) -> Result<(TrainConfig, BatchSplit, MlpParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[5]));
    let mut spec = DatasetSpec::toy(LabelMode::True, seed);
    spec.per_class = 4;
    spec.dim = 6;
    let mut cfg = TrainConfig::new(mode, spec);
    cfg.hidden_dims = vec![9, 8, 7];
    cfg.batch_size = 12;
    cfg.seed = seed;
    let x = random_matrix(&mut rng, 6, 12).scaled(2.0);
    let batch = LabeledBatch::new(x, (0..12).map(|j| j % 3 + 1).collect(), 3)?;
    let split = stratified_split(&batch, 0.5, seed)?;
    let params = xavier_init(&cfg.network_dims(), seed)?;
    Ok((cfg, split, params))
}

/// Objective including the decay penalty for `softmax_wd`, with the
/// subspaces frozen at `frozen`.
pub fn objective_value(
    params: &MlpParams,
    cfg: &TrainConfig,
    split: &BatchSplit,
    frozen: Option<&crate::classifier::SubspaceSet>,
) -> Result<f64> {
    let obj = batch_objective(params, cfg, split, frozen)?;
    Ok(with_weight_decay(obj, params, cfg.effective_weight_decay()).total)
}

/// Largest coordinate-wise relative error between the backpropagated
/// gradient and central differences, with the subspace bases held at their
/// unperturbed values.
pub fn gradient_check(
    params: &MlpParams,
    cfg: &TrainConfig,
    split: &BatchSplit,
    h: f64,
) -> Result<f64> {
    let frozen = if cfg.mode == Mode::OleGrsvnet {
        let (z, _) = crate::net::forward(params, &split.geometry.x)?;
        Some(geometry_bases(
            &z,
            &split.geometry.y,
            split.classes(),
            cfg.ratio,
        )?)
    } else {
        None
    };
    let obj = batch_objective(params, cfg, split, frozen.as_ref())?;
    let analytic = with_weight_decay(obj, params, cfg.effective_weight_decay())
        .grads
        .flatten();
    let base = params.flatten();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (k, &g) in analytic.iter().enumerate() {
        let mut at = |delta: f64| -> Result<f64> {
            let mut flat = base.clone();
            flat[k] += delta;
            probe.assign_flat(&flat)?;
            objective_value(&probe, cfg, split, frozen.as_ref())
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
    }
    Ok(worst)
}

pub fn gradient_suite(points: usize, seed: u64) -> Result<SuiteReport> {
    let tol = 1e-3;
    let (mut failures, mut worst, mut cases) = (0, 0.0f64, 0);
    for mode in Mode::ALL {
        for p in 0..points {
            let (cfg, split, params) = gradient_fixture(mode, derive_seed(seed, &[6, p as u64]))?;
            let rel = gradient_check(&params, &cfg, &split, 1e-6)?;
            cases += 1;
            worst = worst.max(rel);
            failures += usize::from(rel > tol);
        }
    }
    Ok(SuiteReport {
        name: "end-to-end gradients vs finite differences",
        cases,
        failures,
        worst,
        tolerance: tol,
    })
}

/// Features of each class inside mutually orthogonal subspaces give zero
/// loss; moving one validation feature off its subspace raises it.
pub fn optimum_fixture_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[7]));
    let d = 9;
    let q = random_orthogonal(&mut rng, d);
    // class c lives in span(q_{3c}, q_{3c+1})
    let feature = |rng: &mut ChaCha8Rng, c: usize| -> Vec<f64> {
        let a: f64 = rng.gen_range(0.5..2.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        (0..d)
            .map(|i| a * q.get(i, 3 * c) + b * q.get(i, 3 * c + 1))
            .collect()
    };
    let labels: Vec<usize> = (0..12).map(|j| j % 3 + 1).collect();
    let cols_g: Vec<Vec<f64>> = labels.iter().map(|&y| feature(&mut rng, y - 1)).collect();
    let cols_v: Vec<Vec<f64>> = labels.iter().map(|&y| feature(&mut rng, y - 1)).collect();
    let as_matrix = |cols: &[Vec<f64>]| {
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        Matrix::from_columns(d, &refs)
    };
    let z_g = as_matrix(&cols_g)?;
    let mut z_v = as_matrix(&cols_v)?;
    let split = BatchSplit::new(
        LabeledBatch::new(z_g.clone(), labels.clone(), 3)?,
        LabeledBatch::new(z_v.clone(), labels.clone(), 3)?,
    )?;
    let settings = GrsvnetSettings::default();
    let optimum = grsvnet_loss(&split, &z_g, &z_v, &settings, None)?
        .breakdown
        .total;
    for i in 0..d {
        z_v.set(i, 0, z_v.get(i, 0) + q.get(i, 3));
    }
    let perturbed = grsvnet_loss(&split, &z_g, &z_v, &settings, None)?
        .breakdown
        .total;
    let zero = Matrix::zeros(d, 12);
    let degenerate = grsvnet_loss(&split, &z_g, &zero, &settings, None)?.degenerate;
    let failures = usize::from(optimum > 1e-6)
        + usize::from(perturbed <= 1e-3)
        + usize::from(degenerate != 12);
    Ok(SuiteReport {
        name: "orthogonal optimum has zero loss",
        cases: 3,
        failures,
        worst: optimum,
        tolerance: 1e-6,
    })
}

/// Every suite at a size that finishes in a few seconds.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        subadditivity_suite(1000, seed)?,
        orthogonal_equality_suite(200, seed)?,
        overlap_gap_suite(200, seed)?,
        subgradient_suite(100, seed)?,
        gradient_suite(5, seed)?,
        optimum_fixture_suite(seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for report in run_all(1).unwrap() {
            assert!(report.passed(), "{report}");
        }
    }
}
