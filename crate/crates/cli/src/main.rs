use anyhow::Result;
use clap::{Parser, Subcommand};
use npuscope_cli::commands;
use npuscope_cli::config::ExperimentConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulator and analysis harness for the memory-bandwidth utilization side
/// channel on tiled inference accelerators.
#[derive(Parser)]
#[command(name = "npuscope", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate bandwidth traces and ground-truth span files per model
    Simulate(CommonArgs),
    /// Tile-size exploration: best schedules and overhead distributions
    Tune(CommonArgs),
    /// Boundary detection and layer-type classification on existing traces
    Attack(CommonArgs),
    /// Traffic-shaper sweep, shaped traces, and the post-defense attack rerun
    Defend(CommonArgs),
    /// Re-render aligned-text reports from the CSVs in the output directory
    Report(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Key = value configuration file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the model list (comma-separated names or catalog paths)
    #[arg(long)]
    models: Option<String>,
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(models) = &args.models {
        cfg.set("models", models).map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Tune(a) => ("tune", a),
        Command::Attack(a) => ("attack", a),
        Command::Defend(a) => ("defend", a),
        Command::Report(a) => ("report", a),
    };
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    match commands::run(name, &cfg, &args.out) {
        Ok(outcome) => {
            println!("{}: {} files written", name, outcome.written.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
