use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use poco_core::experiment::{emit_csv, run_experiment, ExperimentConfig, Scenario};

#[derive(Parser)]
#[command(name = "poco", version, about = "Predictive online convex optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, write the per-round CSV and print a JSON summary.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// regulation, curtailment or synthetic-quadratic.
    scenario: Scenario,
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Forecast accuracy; repeat for a sweep.
    #[arg(long = "epsilon")]
    epsilons: Vec<f64>,
    /// CSV destination. Defaults to `<scenario>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.scenario = Some(args.scenario);
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.rounds.is_some() {
        cfg.rounds = args.rounds;
    }
    if !args.epsilons.is_empty() {
        cfg.epsilon = Some(args.epsilons);
    }
    if args.out.is_some() {
        cfg.output = args.out;
    }
    let resolved = cfg.resolve().context("invalid configuration")?;
    let out = resolved
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", resolved.scenario)));

    let run = run_experiment(&resolved).context("experiment failed")?;
    emit_csv(&run, &out)?;
    println!("{}", run.summary().to_json());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
