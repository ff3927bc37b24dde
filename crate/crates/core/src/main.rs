use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inexact_consensus::config::{validate_config, ExperimentConfig};
use inexact_consensus::experiment::{run_experiment, Experiment};
use inexact_consensus::Error;
use serde::Serialize;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Distributed inexact-oracle subgradient experiments.
#[derive(Parser)]
#[command(name = "inexact-consensus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and print its JSON summary.
    Run(Overrides),
    /// Check a config without running it.
    Validate(Overrides),
    /// Solve the centralized problem only.
    Reference(Overrides),
}

#[derive(Args)]
struct Overrides {
    config: PathBuf,
    /// Write the per-round CSV here instead of the config's path.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "SEED")]
    seed_override: Option<u64>,
    #[arg(long, value_name = "K")]
    horizon: Option<usize>,
}

impl Overrides {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(csv) = &self.csv {
            config.output.csv = Some(csv.clone());
        }
        if let Some(seed) = self.seed_override {
            config.seed = seed;
        }
        if let Some(k) = self.horizon {
            config.run.horizon = k;
        }
        Ok(config)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn fail(path: &Path, err: &Error) -> ExitCode {
    eprintln!("error: {}: {err}", path.display());
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(o) => {
            let result = o.load().and_then(run_experiment).and_then(|art| {
                print_json(&art.summary)?;
                Ok(art.summary.passed)
            });
            match result {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
                Err(e) => fail(&o.config, &e),
            }
        }
        Command::Validate(o) => {
            let result = o.load().and_then(|config| {
                let report = validate_config(&config);
                print_json(&report)?;
                Ok(report.ok())
            });
            match result {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_USAGE),
                Err(e) => fail(&o.config, &e),
            }
        }
        Command::Reference(o) => {
            let result = o
                .load()
                .and_then(Experiment::build)
                .and_then(|exp| exp.reference())
                .and_then(|sol| {
                    print_json(&sol)?;
                    Ok(sol.converged)
                });
            match result {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
                Err(e) => fail(&o.config, &e),
            }
        }
    }
}
