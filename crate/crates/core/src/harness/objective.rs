//! Per-mode training objective of one batch and feature extraction.

use crate::classifier::SubspaceSet;
use crate::data::BatchSplit;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::loss::{grsvnet_loss, ole_loss, softmax_xent, GrsvnetSettings};
use crate::net::{backward, backward_tapped, forward, infer, MlpParams};

use super::config::{Mode, TrainConfig};

/// Value and parameter gradient of one batch.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    /// Per-sample OLE term: of the geometry batch for `ole_grsvnet`, of the
    /// whole batch (before `ole_weight`) for `softmax_ole`, zero otherwise.
    pub l_g: f64,
    /// Subspace validation loss for `ole_grsvnet`, softmax cross entropy
    /// for the baselines.
    pub l_v: f64,
    pub total: f64,
    /// Validation samples whose scores were all zero.
    pub degenerate: usize,
    pub grads: MlpParams,
}

pub fn grsvnet_settings(cfg: &TrainConfig) -> GrsvnetSettings {
    GrsvnetSettings {
        lambda: cfg.lambda,
        eps: cfg.eps,
        ratio: cfg.ratio,
        trunc: cfg.trunc,
    }
}

/// Objective of `cfg.mode` on one split batch, without weight decay (the
/// optimizer applies it). Softmax modes use the whole batch; `ole_grsvnet`
/// uses the geometry/validation partition. `frozen` replaces the subspaces
/// the validation term is scored against.
pub fn batch_objective(
    params: &MlpParams,
    cfg: &TrainConfig,
    split: &BatchSplit,
    frozen: Option<&SubspaceSet>,
) -> Result<BatchObjective> {
    let x = split.geometry.x.hconcat(&split.validation.x)?;
    let (out, cache) = forward(params, &x)?;
    match cfg.mode {
        Mode::OleGrsvnet => {
            let n_g = split.geometry.len();
            let g_idx: Vec<usize> = (0..n_g).collect();
            let v_idx: Vec<usize> = (n_g..out.cols()).collect();
            let z_g = out.select_columns(&g_idx);
            let z_v = out.select_columns(&v_idx);
            let loss = grsvnet_loss(split, &z_g, &z_v, &grsvnet_settings(cfg), frozen)?;
            let grad_out = loss.grad_geometry.hconcat(&loss.grad_validation)?;
            Ok(BatchObjective {
                l_g: loss.breakdown.geometric,
                l_v: loss.breakdown.validation,
                total: loss.breakdown.total,
                degenerate: loss.degenerate,
                grads: backward(params, &cache, &grad_out)?,
            })
        }
        Mode::Softmax | Mode::SoftmaxWd | Mode::SoftmaxOle => {
            let mut labels = split.geometry.y.clone();
            labels.extend_from_slice(&split.validation.y);
            let (xent, grad_logits) = softmax_xent(&out, &labels)?;
            let (l_g, grad_hidden) = if cfg.mode == Mode::SoftmaxOle {
                let n = labels.len() as f64;
                let ole = ole_loss(cache.last_hidden(), &labels, cfg.trunc)?;
                (ole.value / n, Some(ole.grad.scaled(cfg.ole_weight / n)))
            } else {
                (0.0, None)
            };
            let (grads, _) = backward_tapped(params, &cache, &grad_logits, grad_hidden.as_ref())?;
            Ok(BatchObjective {
                l_g,
                l_v: xent,
                total: xent + cfg.ole_weight * l_g,
                degenerate: 0,
                grads,
            })
        }
    }
}

/// `½·wd·‖θ‖²` over every parameter, weights and biases alike, matching
/// the optimizer's coupled decay.
pub fn weight_decay_penalty(params: &MlpParams, weight_decay: f64) -> f64 {
    let sq: f64 = params
        .flat_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|v| v * v)
        .sum();
    0.5 * weight_decay * sq
}

/// Adds the decay penalty and its gradient `wd·θ` to an objective.
pub fn with_weight_decay(
    mut obj: BatchObjective,
    params: &MlpParams,
    weight_decay: f64,
) -> BatchObjective {
    obj.total += weight_decay_penalty(params, weight_decay);
    for (g, t) in obj
        .grads
        .flat_slices_mut()
        .into_iter()
        .zip(params.flat_slices())
    {
        for (gi, ti) in g.iter_mut().zip(t) {
            *gi += weight_decay * ti;
        }
    }
    obj
}

/// Learned features of `x`: the network output for `ole_grsvnet`, the last
/// hidden activations (input of the softmax head) otherwise.
pub fn extract_features(params: &MlpParams, mode: Mode, x: &Matrix) -> Result<Matrix> {
    if mode.uses_softmax_head() {
        let (_, cache) = forward(params, x)?;
        Ok(cache.last_hidden().clone())
    } else {
        infer(params, x)
    }
}

/// Argmax of the logits per column, ties to the smallest class id; labels
/// are 1-based.
pub fn softmax_predictions(logits: &Matrix) -> Vec<usize> {
    (0..logits.cols())
        .map(|j| {
            let mut best = 0;
            for i in 1..logits.rows() {
                if logits.get(i, j) > logits.get(best, j) {
                    best = i;
                }
            }
            best + 1
        })
        .collect()
}
