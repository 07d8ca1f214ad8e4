//! Experiment runner: configuration, per-mode objectives, the training
//! loop, metrics, mode comparison, checkpoints and feature export.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod features;
pub mod metrics;
pub mod objective;
pub mod selftest;
pub mod train;

pub use checkpoint::Checkpoint;
pub use compare::{compare_modes, ComparisonReport, ModeResult};
pub use config::{Mode, TrainConfig};
pub use features::{export_features, pca, FeatureExport, Pca};
pub use metrics::{metrics_csv, write_metrics, EpochMetrics, METRICS_HEADER};
pub use objective::{batch_objective, extract_features, with_weight_decay, BatchObjective};
pub use train::{evaluate, run_experiment, run_experiment_with, train_on, RunOptions, RunOutcome};
