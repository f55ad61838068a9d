//! `hyperfusion` command-line driver.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperfusion::{Error, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hyperfusion", version, about = "Multimodal popularity regression pipeline")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; changes wall time only.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset into the data directory (or --out).
    Synth,
    /// Fit the feature pipeline on every post and export the feature matrix.
    Featurize,
    /// Train the ensemble and report held-out SRC and MAE.
    Train,
    /// Predict every post with a trained model.
    Predict {
        /// Model artifact; defaults to `<out>/model.bin`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score a model on the held-out posts, or a predictions CSV against labels.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV `post_id,prediction` to score instead of running a model.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Run the full model and each configured ablation variant.
    Ablate,
    /// Permutation importance of every feature on the held-out posts.
    Importance {
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Featurize => "featurize",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate => "ablate",
            Command::Importance { .. } => "importance",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Unknown { .. } => 2,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Range { .. }
        | Error::Duplicate(_)
        | Error::Format { .. }
        | Error::Alignment { .. }
        | Error::MissingIds { .. }
        | Error::Unimputable(_)
        | Error::Version { .. } => 3,
        _ => 4,
    }
}

fn load_config(cli: &Cli) -> hyperfusion::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> hyperfusion::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config {
                field: "--workers".into(),
                message: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                field: "--workers".into(),
                message: e.to_string(),
            })?;
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth => commands::synth(&cfg, cli.out.as_deref()),
        Command::Featurize => commands::featurize(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Predict { model } => commands::predict(&cfg, model.as_deref()),
        Command::Evaluate { model, predictions } => {
            commands::evaluate(&cfg, model.as_deref(), predictions.as_deref())
        }
        Command::Ablate => commands::ablate(&cfg),
        Command::Importance { model } => commands::importance(&cfg, model.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error in {}: {e}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
