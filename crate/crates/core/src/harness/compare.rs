//! Runs the same task under several modes and tabulates final accuracies.

use std::io::Write;
use std::path::Path;

use crate::data::{format_real, LabelMode};
use crate::error::{Error, Result};

use super::config::{Mode, TrainConfig};
use super::metrics::write_metrics;
use super::train::{run_experiment_with, RunOptions, RunOutcome};

pub const SUMMARY_HEADER: &str = "mode,status,train_acc,test_acc,table_cell";

#[derive(Debug)]
pub struct ModeResult {
    pub mode: Mode,
    pub outcome: Result<RunOutcome>,
}

#[derive(Debug)]
pub struct ComparisonReport {
    pub label_mode: LabelMode,
    pub results: Vec<ModeResult>,
}

impl ComparisonReport {
    pub fn get(&self, mode: Mode) -> Option<&RunOutcome> {
        self.results
            .iter()
            .find(|r| r.mode == mode)?
            .outcome
            .as_ref()
            .ok()
    }

    /// One row per mode. `table_cell` reads like a results table: held-out
    /// accuracy in percent for true labels, training accuracy in
    /// parentheses for shuffled labels (the memorization score).
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for r in &self.results {
            match &r.outcome {
                Ok(o) => {
                    let m = o.final_metrics();
                    let cell = match (self.label_mode, m.test_accuracy) {
                        (LabelMode::True, Some(t)) => format!("{:.2}", 100.0 * t),
                        _ => format!("({:.2})", 100.0 * m.train_accuracy),
                    };
                    out.push_str(&format!(
                        "{},ok,{},{},{}\n",
                        r.mode,
                        format_real(m.train_accuracy),
                        m.test_accuracy.map(format_real).unwrap_or_default(),
                        cell
                    ));
                }
                Err(e) => {
                    let msg = e.to_string().replace([',', '\n'], ";");
                    out.push_str(&format!("{},error: {msg},,,\n", r.mode));
                }
            }
        }
        out
    }
}

/// Trains every mode on the shared dataset and seed of `base`, one thread
/// per mode. A failing mode is reported without stopping the others. When
/// `out_dir` is given, writes `metrics_<mode>.csv` for each successful run
/// and `summary.csv`.
pub fn compare_modes(
    base: &TrainConfig,
    modes: &[Mode],
    out_dir: Option<&Path>,
    options: &RunOptions,
) -> Result<ComparisonReport> {
    if modes.is_empty() {
        return Err(Error::Config("no modes to compare".into()));
    }
    let results: Vec<ModeResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = modes
            .iter()
            .map(|&mode| {
                let mut cfg = base.clone();
                cfg.mode = mode;
                scope.spawn(move || ModeResult {
                    mode,
                    outcome: run_experiment_with(&cfg, options),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    });
    let report = ComparisonReport {
        label_mode: base.dataset.label_mode,
        results,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for r in &report.results {
            match &r.outcome {
                Ok(o) => write_metrics(&dir.join(format!("metrics_{}.csv", r.mode)), &o.metrics)?,
                Err(e) => log::error!("{} failed: {e}", r.mode),
            }
        }
        let path = dir.join("summary.csv");
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(report.summary_csv().as_bytes())
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
