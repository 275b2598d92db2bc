mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "tcnaa", version, about = "WiFi CSI interaction recognition with an attention-augmented TCN")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; sections without their own seed inherit it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides paths.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Manifest or dataset directory (overrides paths.dataset).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Model checkpoint for `eval` (overrides paths.checkpoint).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Configuration override `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic CSI dataset.
    Synth,
    /// Gate, trim and preprocess recordings into CSP1 samples.
    Preprocess,
    /// Expand a dataset with augmented copies.
    Augment,
    /// K-fold training; writes checkpoints and metrics per fold.
    Train,
    /// Evaluate a checkpoint on a preprocessed dataset.
    Eval,
    /// Finite-difference check of every primitive and the full model.
    Gradcheck,
    /// Sweep one hyper-parameter and tabulate the results.
    Ablate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    let mut cfg = config::load(g.config.as_deref(), g.seed, &g.overrides)?;
    if let Some(out) = &g.out {
        cfg.paths.out = out.clone();
    }
    if let Some(p) = &g.input {
        cfg.paths.dataset = Some(p.clone());
    }
    if let Some(c) = &g.checkpoint {
        cfg.paths.checkpoint = Some(c.clone());
    }
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Augment => commands::augment(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Gradcheck => commands::gradcheck(&cfg),
        Command::Ablate => commands::ablate(&cfg),
    }
}
