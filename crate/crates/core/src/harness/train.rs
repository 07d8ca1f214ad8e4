use std::time::Instant;

use crate::classifier::{accuracy, fit_batch, SubspaceSet};
use crate::data::{derive_seed, epoch_batches, generate, LabeledBatch};
use crate::error::{Error, Result};
use crate::net::{
    infer, sgd_step, step_decay_lr, xavier_init, MlpParams, OptimizerState, SgdConfig,
};

use super::config::{Mode, TrainConfig};
use super::metrics::EpochMetrics;
use super::objective::{
    batch_objective, extract_features, softmax_predictions, weight_decay_penalty,
};

const STREAM_INIT: u64 = 7;
const STREAM_FIT: u64 = 8;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record elapsed seconds in the metrics; off by default so that
    /// repeated runs produce identical files.
    pub wall_time: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: TrainConfig,
    pub params: MlpParams,
    /// Subspace classifier fitted on the final training features
    /// (`ole_grsvnet` only).
    pub subspaces: Option<SubspaceSet>,
    pub metrics: Vec<EpochMetrics>,
}

impl RunOutcome {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.metrics.last().expect("at least one epoch is trained")
    }
}

pub fn run_experiment(cfg: &TrainConfig) -> Result<RunOutcome> {
    run_experiment_with(cfg, &RunOptions::default())
}

pub fn run_experiment_with(cfg: &TrainConfig, options: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let (train, test) = generate(&cfg.dataset)?;
    train_on(cfg, &train, &test, options)
}

/// Trains on an explicit dataset (e.g. one loaded from CSV); the config's
/// dataset block only supplies the class count and input dimension.
pub fn train_on(
    cfg: &TrainConfig,
    train: &LabeledBatch,
    test: &LabeledBatch,
    options: &RunOptions,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if train.dim() != cfg.dataset.dim || train.classes != cfg.dataset.classes {
        return Err(Error::Config(format!(
            "dataset has dim {} and {} classes, config expects {} and {}",
            train.dim(),
            train.classes,
            cfg.dataset.dim,
            cfg.dataset.classes
        )));
    }
    let started = Instant::now();
    let mut params = xavier_init(&cfg.network_dims(), derive_seed(cfg.seed, &[STREAM_INIT]))?;
    let mut opt = OptimizerState::new(
        &params,
        &SgdConfig {
            learning_rate: cfg.lr,
            momentum: cfg.momentum,
            weight_decay: cfg.effective_weight_decay(),
        },
    )?;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut subspaces = None;
    for epoch in 0..cfg.epochs {
        opt.learning_rate = step_decay_lr(cfg.lr, epoch, cfg.epochs);
        let plan = epoch_batches(train, cfg.batch_size, cfg.g_fraction, cfg.seed, epoch)?;
        if plan.splits.is_empty() {
            return Err(Error::Config(format!(
                "epoch {} has no batch with two samples of every class",
                epoch + 1
            )));
        }
        let (mut l_g, mut l_v, mut total, mut degenerate) = (0.0, 0.0, 0.0, 0);
        for (b, split) in plan.splits.iter().enumerate() {
            let wrap = |source: Error| Error::Training {
                epoch: epoch + 1,
                batch: b,
                source: Box::new(source),
            };
            let obj = batch_objective(&params, cfg, split, None).map_err(wrap)?;
            if !obj.total.is_finite() {
                return Err(wrap(Error::NonFinite("batch loss")));
            }
            log::debug!(
                "epoch {} batch {b}: l_g {:.6e} l_v {:.6e} |grad| {:.3e}",
                epoch + 1,
                obj.l_g,
                obj.l_v,
                obj.grads
                    .flatten()
                    .iter()
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt()
            );
            l_g += obj.l_g;
            l_v += obj.l_v;
            total += obj.total + weight_decay_penalty(&params, cfg.effective_weight_decay());
            degenerate += obj.degenerate;
            sgd_step(&mut params, &obj.grads, &mut opt).map_err(wrap)?;
            if !params.is_finite() {
                return Err(wrap(Error::NonFinite("parameters after update")));
            }
        }
        let n_b = plan.splits.len() as f64;
        let eval = evaluate(&params, cfg, train, test)?;
        subspaces = eval.subspaces;
        metrics.push(EpochMetrics {
            epoch: epoch + 1,
            train_accuracy: eval.train_accuracy,
            test_accuracy: eval.test_accuracy,
            l_g: l_g / n_b,
            l_v: l_v / n_b,
            total_loss: total / n_b,
            degenerate_flags: degenerate,
            wall_time: if options.wall_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        if (epoch + 1) % 100 == 0 || epoch + 1 == cfg.epochs {
            log::info!(
                "{} epoch {}/{}: train_acc {:.4} total {:.5}",
                cfg.mode,
                epoch + 1,
                cfg.epochs,
                eval.train_accuracy,
                total / n_b
            );
        }
    }
    Ok(RunOutcome {
        config: cfg.clone(),
        params,
        subspaces,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub subspaces: Option<SubspaceSet>,
}

/// Accuracy of the current network: softmax argmax for the baselines, the
/// subspace classifier fitted on all training features for `ole_grsvnet`.
pub fn evaluate(
    params: &MlpParams,
    cfg: &TrainConfig,
    train: &LabeledBatch,
    test: &LabeledBatch,
) -> Result<Evaluation> {
    if cfg.mode == Mode::OleGrsvnet {
        let z_train = extract_features(params, cfg.mode, &train.x)?;
        let set = fit_batch(
            &z_train,
            train,
            cfg.ratio,
            1.0,
            derive_seed(cfg.seed, &[STREAM_FIT]),
        )?;
        let train_accuracy = accuracy(&set, &z_train, &train.y, cfg.eps)?;
        let test_accuracy = if test.is_empty() {
            None
        } else {
            let z_test = extract_features(params, cfg.mode, &test.x)?;
            Some(accuracy(&set, &z_test, &test.y, cfg.eps)?)
        };
        Ok(Evaluation {
            train_accuracy,
            test_accuracy,
            subspaces: Some(set),
        })
    } else {
        let acc = |b: &LabeledBatch| -> Result<f64> {
            let pred = softmax_predictions(&infer(params, &b.x)?);
            Ok(pred.iter().zip(&b.y).filter(|(p, y)| p == y).count() as f64 / b.len() as f64)
        };
        Ok(Evaluation {
            train_accuracy: acc(train)?,
            test_accuracy: if test.is_empty() {
                None
            } else {
                Some(acc(test)?)
            },
            subspaces: None,
        })
    }
}
