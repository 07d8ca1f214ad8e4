use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use grsvnet::data::LabeledBatch;
use grsvnet::harness::{
    compare_modes, export_features, run_experiment_with, selftest, write_metrics, Checkpoint, Mode,
    RunOptions, TrainConfig,
};
use grsvnet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "grsvnet",
    version,
    about = "Train and compare self-validated subspace networks on synthetic tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration; writes metrics, a checkpoint and, for
    /// ole_grsvnet, the class bases.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Record elapsed seconds in the metrics (makes the file
        /// run-dependent).
        #[arg(long)]
        wall_time: bool,
    },
    /// Train the same task under several modes and write a summary table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of softmax, softmax_wd, softmax_ole,
        /// ole_grsvnet.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "softmax,softmax_wd,softmax_ole,ole_grsvnet"
        )]
        modes: Vec<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        wall_time: bool,
    },
    /// Dump learned features of a CSV dataset with a 3-component PCA.
    ExportFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV with header sample_id,label,x_0,...
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the randomized property suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            wall_time,
        } => {
            let cfg = TrainConfig::load(&config)?;
            create_dir(&out_dir)?;
            let outcome = run_experiment_with(&cfg, &RunOptions { wall_time })?;
            let metrics = out_dir.join(format!("metrics_{}.csv", cfg.mode));
            write_metrics(&metrics, &outcome.metrics)?;
            let ckpt = out_dir.join(format!("checkpoint_{}.json", cfg.mode));
            Checkpoint::from_outcome(&outcome).save(&ckpt)?;
            if let Some(set) = &outcome.subspaces {
                set.write_csv(&out_dir.join(format!("bases_{}.csv", cfg.mode)))?;
            }
            let last = outcome.final_metrics();
            println!(
                "{}: train_acc {:.4}{} after {} epochs; metrics in {}",
                cfg.mode,
                last.train_accuracy,
                last.test_accuracy
                    .map(|t| format!(", test_acc {t:.4}"))
                    .unwrap_or_default(),
                last.epoch,
                metrics.display()
            );
            Ok(true)
        }
        Command::Compare {
            config,
            modes,
            out_dir,
            wall_time,
        } => {
            let cfg = TrainConfig::load(&config)?;
            let modes = modes
                .iter()
                .map(|m| m.parse::<Mode>())
                .collect::<Result<Vec<_>>>()?;
            let report = compare_modes(&cfg, &modes, Some(&out_dir), &RunOptions { wall_time })?;
            print!("{}", report.summary_csv());
            Ok(report.results.iter().all(|r| r.outcome.is_ok()))
        }
        Command::ExportFeatures {
            checkpoint,
            dataset,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let batch = LabeledBatch::read_csv(&dataset)?;
            let export = export_features(&ckpt.params, ckpt.config.mode, &batch, &out)?;
            println!(
                "wrote {} samples of {}-dimensional features to {}; 3 components explain {:.2}% of the variance",
                export.samples,
                export.feature_dim,
                out.display(),
                100.0 * export.pca.explained_variance()
            );
            Ok(true)
        }
        Command::Selftest { seed } => {
            let reports = selftest::run_all(seed)?;
            for r in &reports {
                println!("{r}");
            }
            Ok(reports.iter().all(|r| r.passed()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
