//! Experiment runner: configuration, subcommands and output manifests.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_evaluate, cmd_prepare, cmd_pretrain_embedding, cmd_sweep, cmd_train, sweep_settings, write_manifest, Prepared,
    SweepAxis, TrainSummary, ALPHA_SWEEP, BEST_FILE, CONFIG_FILE, DATASET_FILE, EMBEDDING_FILE, LOG_FILE, MANIFEST_FILE,
    METRICS_CSV, METRICS_JSON, PLOT_FILE, SPLITS_FILE, STATE_FILE, STATS_FILE, SWEEP_FILE, VALIDATION_FILE,
    WEIGHT_SWEEP,
};
pub use config::RunConfig;

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "smorl", version, about = "Multi-objective Q-learning regularized session recommender")]
pub struct Cli {
    /// JSON config file with flat keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub fold: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a config key, e.g. `--set alpha=2` or `--set weights=[0,1,1]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read raw events, preprocess, split and write the dataset.
    Prepare,
    /// Train a supervised model and save its frozen item embedding.
    PretrainEmbedding,
    /// Train with the multi-objective Q-learning head.
    Train {
        /// Continue from the trainer state in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Test-split metrics of a saved encoder.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate every fold; `{fold}` in the checkpoint path is substituted.
        #[arg(long)]
        all_folds: bool,
    },
    /// Train and evaluate a sequence of weight or alpha settings.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
    },
}

impl Cli {
    /// File values, then `--set` overrides, then the dedicated flags.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(f) = self.fold {
            overrides.push(format!("fold={f}"));
        }
        if let Some(o) = &self.out {
            overrides.push(format!("out_dir={}", serde_json::Value::String(o.display().to_string())));
        }
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Prepare => {
            let out = cmd_prepare(&cfg)?;
            println!("{}", out.display());
        }
        Command::PretrainEmbedding => {
            let path = cmd_pretrain_embedding(&cfg)?;
            println!("{}", path.display());
        }
        Command::Train { resume } => {
            let s = cmd_train(&cfg, *resume)?;
            println!("{} (steps {}, best step {:?})", s.out_dir.display(), s.steps, s.best_step);
        }
        Command::Evaluate { checkpoint, all_folds } => {
            let reports = cmd_evaluate(&cfg, checkpoint, *all_folds)?;
            for r in &reports {
                println!(
                    "HR@20 {:.4}  NDCG@20 {:.4}  CV@20 {:.4}",
                    r.hr(20).unwrap_or(f64::NAN),
                    r.ndcg(20).unwrap_or(f64::NAN),
                    r.cv_all(20).unwrap_or(f64::NAN)
                );
            }
        }
        Command::Sweep { axis } => {
            let out = cmd_sweep(&cfg, *axis)?;
            println!("{}", out.join(SWEEP_FILE).display());
        }
    }
    Ok(())
}
