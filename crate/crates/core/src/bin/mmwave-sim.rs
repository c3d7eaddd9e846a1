//! Command-line front end for the Monte Carlo harness.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mmwave_subspace::harness::{
    emit_results, preset, run_scenario, EmitOptions, OutputFormat, RunOptions, Scenario,
};
use mmwave_subspace::Error;

#[derive(Parser)]
#[command(
    name = "mmwave-sim",
    version,
    about = "Seeded Monte Carlo runs of mmWave subspace estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write per-cell wall times to timing.csv.
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a built-in figure preset (fig3 … fig7).
    Figures {
        preset: String,
        #[command(flatten)]
        args: RunArgs,
    },
}

fn execute(mut scenario: Scenario, args: &RunArgs) -> Result<(), Error> {
    if let Some(seed) = args.seed {
        scenario.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        scenario.trials = trials;
    }
    scenario.validate()?;
    let table = run_scenario(&scenario, RunOptions { jobs: args.jobs })?;
    let format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::StructuredText,
    };
    for path in emit_results(
        &scenario,
        &table,
        &args.out,
        format,
        EmitOptions {
            timing: args.timing,
        },
    )? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, args } => Scenario::from_path(config).and_then(|s| execute(s, args)),
        Command::Validate { config } => Scenario::from_path(config).map(|s| {
            println!(
                "{}: ok ({} trials, {} sweep points)",
                s.name,
                s.trials,
                s.sweep.values.len()
            );
        }),
        Command::Figures { preset: name, args } => preset(name).and_then(|s| execute(s, args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
