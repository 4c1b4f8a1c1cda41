//! Single-binary command surface: dataset generation, the three training
//! stages, evaluation, and policy rollouts.
//!
//! Progress streams to stderr as JSON lines; stdout carries only the
//! machine-readable results. Exit codes: 0 success, 2 usage or config
//! errors, 3 data errors, 4 checkpoint errors.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "scene2act",
    version,
    about = "Household simulation, captioner + action-model training, and evaluation",
    after_help = "Environment overrides (flags win): SCENE2ACT_CONFIG, SCENE2ACT_SEED, \
                  SCENE2ACT_THREADS, SCENE2ACT_DATA, SCENE2ACT_OUT."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON config file; flag values override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base RNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker cap for parallel sections (default 1 for reproducibility).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the expert dataset (rasters, captions, actions) plus
    /// vocabulary and hashed manifest.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Output dataset directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Layout selection, e.g. `1-7` or `1,3,5`.
        #[arg(long)]
        layouts: Option<String>,
        /// Episodes per layout.
        #[arg(long)]
        episodes: Option<u32>,
        /// Comma-separated views: auto, first_person, front_person.
        #[arg(long)]
        views: Option<String>,
    },
    /// Fine-tune the captioner on (raster, caption) pairs.
    TrainSum {
        #[command(flatten)]
        common: Common,
        /// Dataset directory from gen-data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory for the checkpoint, metrics, and resolved config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Training epochs (overrides config).
        #[arg(long)]
        epochs: Option<usize>,
        /// View to train on.
        #[arg(long)]
        view: Option<String>,
    },
    /// Fine-tune the action model by imitation, with the captioner frozen.
    TrainApmIl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Captioner checkpoint to condition on.
        #[arg(long)]
        sum_checkpoint: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Condition on oracle captions instead of captioner decodes.
        #[arg(long)]
        oracle_captions: bool,
    },
    /// Fine-tune the action model with REINFORCE against executability.
    TrainApmRl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sum_checkpoint: PathBuf,
        /// Imitation-trained warm start.
        #[arg(long)]
        apm_checkpoint: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Stop after this many optimizer updates.
        #[arg(long)]
        max_updates: Option<usize>,
        /// Task instances to train on (cycled over layouts).
        #[arg(long)]
        task_instances: Option<usize>,
    },
    /// Score prediction files against references and emit the metric
    /// report (caption metrics plus execution/success rates).
    Eval {
        #[command(flatten)]
        common: Common,
        /// Candidate captions, one per line, aligned with --refs.
        #[arg(long)]
        preds: PathBuf,
        /// Reference captions, one per line.
        #[arg(long)]
        refs: PathBuf,
        /// Trajectory file from `rollout` for execution/success rates.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Report file to write (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a checkpointed policy in seeded environments and print the
    /// trajectory summary and rates.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        sum_checkpoint: PathBuf,
        #[arg(long)]
        apm_checkpoint: PathBuf,
        /// Layout selection for rollout worlds.
        #[arg(long)]
        layouts: Option<String>,
        /// Episodes to roll out.
        #[arg(long)]
        episodes: Option<u32>,
        /// Cap on steps per episode.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Where to write the trajectory file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Error category to exit code mapping.
pub enum AppError {
    Usage(String),
    Data(String),
    Checkpoint(String),
}

impl AppError {
    fn code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) => 3,
            AppError::Checkpoint(_) => 4,
        }
    }

    fn message(&self) -> (&'static str, &str) {
        match self {
            AppError::Usage(m) => ("usage", m),
            AppError::Data(m) => ("data", m),
            AppError::Checkpoint(m) => ("checkpoint", m),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { common, out, layouts, episodes, views } => {
            commands::gen_data(common, out, layouts, episodes, views)
        }
        Command::TrainSum { common, data, out, epochs, view } => {
            commands::train_sum(common, data, out, epochs, view)
        }
        Command::TrainApmIl { common, data, out, sum_checkpoint, epochs, oracle_captions } => {
            commands::train_apm_il(common, data, out, sum_checkpoint, epochs, oracle_captions)
        }
        Command::TrainApmRl {
            common,
            data,
            out,
            sum_checkpoint,
            apm_checkpoint,
            epochs,
            max_updates,
            task_instances,
        } => commands::train_apm_rl(
            common,
            data,
            out,
            sum_checkpoint,
            apm_checkpoint,
            epochs,
            max_updates,
            task_instances,
        ),
        Command::Eval { common, preds, refs, trajectories, out } => {
            commands::eval(common, preds, refs, trajectories, out)
        }
        Command::Rollout {
            common,
            data,
            sum_checkpoint,
            apm_checkpoint,
            layouts,
            episodes,
            max_steps,
            out,
        } => commands::rollout(
            common,
            data,
            sum_checkpoint,
            apm_checkpoint,
            layouts,
            episodes,
            max_steps,
            out,
        ),
    };
    if let Err(err) = result {
        let (category, message) = err.message();
        eprintln!("error[{category}]: {message}");
        std::process::exit(err.code());
    }
}
