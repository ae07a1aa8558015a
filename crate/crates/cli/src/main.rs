//! Batch CLI for the synthetic EEG graph pipeline: dataset synthesis,
//! joint pre-training, distillation fine-tuning, evaluation, and the
//! pair-selection verification oracle.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use disgcmae::error::Error;

use config::ExperimentConfig;

/// Exit codes: 0 success, 1 verification failure, 2 I/O, 3 data,
/// 4 config.
fn exit_code_of(err: &Error) -> u8 {
    match err {
        Error::Internal(_) => 1,
        Error::Io { .. } => 2,
        Error::Data(_) => 3,
        Error::Config(_) | Error::Contract(_) => 4,
    }
}

#[derive(Parser)]
#[command(name = "disgcmae", about = "EEG-style graph pre-training and topology distillation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph dataset directory.
    Synth {
        /// Experiment config JSON (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Jointly pre-train the teacher and student encoders.
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory from `synth`.
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for checkpoints and the loss CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Contrastive objective only (reconstruction weight zero).
        #[arg(long, conflicts_with = "gmae_only")]
        gcl_only: bool,
        /// Reconstruction objective only (contrastive weight zero).
        #[arg(long)]
        gmae_only: bool,
    },
    /// Fine-tune the student with distillation over several seeds.
    Finetune {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Pre-trained teacher checkpoint.
        #[arg(long)]
        teacher: PathBuf,
        /// Pre-trained student checkpoint.
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// tuned updates all parameters, frozen only the classifier head.
        #[arg(long, value_parser = ["tuned", "frozen"], default_value = "tuned")]
        mode: String,
        /// Loss combination.
        #[arg(long, value_parser = ["ce", "ce+kd", "ce+gtd", "union"], default_value = "union")]
        loss: String,
        /// Number of fine-tuning seeds (seed + i each).
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a student checkpoint on a dataset's held-out split.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Metrics JSON output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify pair selection and the topology loss against brute force.
    GtdOracle {
        #[arg(long, default_value_t = 200)]
        seeds: usize,
        #[arg(long, default_value_t = 12)]
        max_nodes: usize,
    },
    /// Print the full default experiment configuration.
    PrintConfig,
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> disgcmae::error::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> disgcmae::error::Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            commands::synth::run(&cfg, &out)
        }
        Command::Pretrain {
            config,
            dataset,
            out,
            seed,
            epochs,
            gcl_only,
            gmae_only,
        } => {
            let mut cfg = load_config(&config, seed)?;
            if let Some(e) = epochs {
                cfg.pretrain.epochs = e;
            }
            if gcl_only {
                cfg.pretrain.weight_rec = 0.0;
            }
            if gmae_only {
                cfg.pretrain.weight_cl = 0.0;
            }
            commands::pretrain::run(&cfg, &dataset, &out)
        }
        Command::Finetune {
            config,
            dataset,
            teacher,
            student,
            out,
            mode,
            loss,
            seeds,
            seed,
        } => {
            let mut cfg = load_config(&config, seed)?;
            cfg.distill.mode = match mode.as_str() {
                "frozen" => disgcmae::distill::FinetuneMode::Frozen,
                _ => disgcmae::distill::FinetuneMode::Tuned,
            };
            let (kd, gtd) = match loss.as_str() {
                "ce" => (0.0, 0.0),
                "ce+kd" => (1.0, 0.0),
                "ce+gtd" => (0.0, 1.0),
                _ => (1.0, 1.0),
            };
            cfg.distill.weight_kd = kd;
            cfg.distill.weight_gtd = gtd;
            if let Some(k) = seeds {
                cfg.finetune_seeds = k;
            }
            commands::finetune::run(&cfg, &dataset, &teacher, &student, &out)
        }
        Command::Eval {
            config,
            student,
            dataset,
            out,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            commands::eval::run(&cfg, &student, &dataset, out.as_deref())
        }
        Command::GtdOracle { seeds, max_nodes } => commands::gtd_oracle::run(seeds, max_nodes),
        Command::PrintConfig => {
            println!("{}", ExperimentConfig::default().to_pretty_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("DISGCMAE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {}", err);
            ExitCode::from(exit_code_of(&err))
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            eprintln!("internal error: {}", msg);
            ExitCode::from(1)
        }
    }
}
