use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use segland_cli::commands;
use segland_core::data::{Split, WeightMode};
use segland_core::eval::AbsentPolicy;
use segland_core::fusion::FusionMode;

#[derive(Parser)]
#[command(name = "segland", version, about = "Generalized few-shot land-cover segmentation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    BaseTrain,
    Support,
    Query,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::BaseTrain => Split::BaseTrain,
            SplitArg::Support => Split::Support,
            SplitArg::Query => Split::Query,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Inverse,
    InverseSqrt,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    ReplaceBase,
    IntersectBase,
}

#[derive(Clone, Copy, ValueEnum)]
enum AbsentArg {
    Exclude,
    Zero,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tile dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write class frequencies and balanced loss weights.
    Prepare {
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long, value_enum, default_value = "base-train")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "inverse-sqrt")]
        mode: WeightArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the base model (encoder, decoder, base prototypes).
    TrainBase {
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train independent base learners for the ensemble.
    TrainEnsemble {
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add novel prototypes to a base checkpoint from the support split.
    UpdateNovel {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict probabilities and labels; repeated checkpoints are averaged.
    Predict {
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long, value_enum, default_value = "query")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse ensemble base predictions with novel-aware predictions.
    Fuse {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        pop: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<FusionArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against a labeled split.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long, value_enum, default_value = "query")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "exclude")]
        mode: AbsentArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render evaluation plots from a report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> segland_cli::Result<()> {
    match cli.command {
        Command::Synth { out, config, seed } => {
            commands::synth(&out, config.as_deref(), seed)?;
        }
        Command::Prepare {
            data_root,
            split,
            mode,
            out,
        } => {
            let mode = match mode {
                WeightArg::Inverse => WeightMode::Inverse,
                WeightArg::InverseSqrt => WeightMode::InverseSqrt,
            };
            commands::prepare(&data_root, split.into(), mode, &out)?;
        }
        Command::TrainBase {
            data_root,
            config,
            seed,
            out,
        } => {
            commands::train_base(&data_root, config.as_deref(), seed, &out)?;
        }
        Command::TrainEnsemble {
            data_root,
            config,
            seed,
            out,
        } => {
            commands::train_ensemble(&data_root, config.as_deref(), seed, &out)?;
        }
        Command::UpdateNovel {
            checkpoint,
            data_root,
            config,
            seed,
            out,
        } => {
            commands::update_novel(&checkpoint, &data_root, config.as_deref(), seed, &out)?;
        }
        Command::Predict {
            checkpoint,
            data_root,
            split,
            out,
        } => {
            commands::predict(&checkpoint, &data_root, split.into(), &out)?;
        }
        Command::Fuse {
            ensemble,
            pop,
            config,
            mode,
            out,
        } => {
            let mode = mode.map(|m| match m {
                FusionArg::ReplaceBase => FusionMode::ReplaceBase,
                FusionArg::IntersectBase => FusionMode::IntersectBase,
            });
            commands::fuse(&ensemble, &pop, config.as_deref(), mode, &out)?;
        }
        Command::Evaluate {
            pred,
            data_root,
            split,
            mode,
            out,
        } => {
            let policy = match mode {
                AbsentArg::Exclude => AbsentPolicy::Exclude,
                AbsentArg::Zero => AbsentPolicy::Zero,
            };
            let (_, report) = commands::evaluate(&pred, &data_root, split.into(), policy, &out)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
            println!(
                "base mIoU {}  novel mIoU {}  score {}",
                fmt(report.base_miou),
                fmt(report.novel_miou),
                fmt(report.total_score)
            );
        }
        Command::Plot { report, out } => {
            commands::plot(&report, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = segland_cli::configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
