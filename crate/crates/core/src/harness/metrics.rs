use std::io::Write;
use std::path::Path;

use crate::data::format_real;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,train_acc,test_acc,l_g,l_v,total,degenerate_flags,seconds";

/// One row of the training log. Losses are means over the epoch's batches.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_accuracy: f64,
    /// `None` when the task has no held-out set.
    pub test_accuracy: Option<f64>,
    pub l_g: f64,
    pub l_v: f64,
    pub total_loss: f64,
    /// Validation samples scored in the all-zero fallback during the epoch.
    pub degenerate_flags: usize,
    /// Cumulative seconds since training started; zero unless wall time
    /// recording was requested.
    pub wall_time: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            format_real(self.train_accuracy),
            self.test_accuracy.map(format_real).unwrap_or_default(),
            format_real(self.l_g),
            format_real(self.l_v),
            format_real(self.total_loss),
            self.degenerate_flags,
            format_real(self.wall_time),
        )
    }
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn write_metrics(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(metrics_csv(rows).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Moving averages of `total_loss` over `window` consecutive epochs.
pub fn moving_average_total(rows: &[EpochMetrics], window: usize) -> Vec<f64> {
    if window == 0 || rows.len() < window {
        return Vec::new();
    }
    rows.windows(window)
        .map(|w| w.iter().map(|r| r.total_loss).sum::<f64>() / window as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, total: f64, test: Option<f64>) -> EpochMetrics {
        EpochMetrics {
            epoch,
            train_accuracy: 0.5,
            test_accuracy: test,
            l_g: 0.25,
            l_v: 1.0,
            total_loss: total,
            degenerate_flags: 2,
            wall_time: 0.0,
        }
    }

    #[test]
    fn csv_layout() {
        let text = metrics_csv(&[row(1, 3.0, Some(0.75)), row(2, 2.0, None)]);
        assert_eq!(
            text,
            "epoch,train_acc,test_acc,l_g,l_v,total,degenerate_flags,seconds\n\
             1,0.5,0.75,0.25,1.0,3.0,2,0.0\n\
             2,0.5,,0.25,1.0,2.0,2,0.0\n"
        );
        assert!(!text.contains('\r'));
    }

    #[test]
    fn moving_average() {
        let rows: Vec<_> = (1..=4).map(|e| row(e, e as f64, None)).collect();
        assert_eq!(moving_average_total(&rows, 2), vec![1.5, 2.5, 3.5]);
        assert!(moving_average_total(&rows, 5).is_empty());
    }
}
