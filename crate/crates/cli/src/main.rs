//! `sfm` command-line tool: simulate data, fit and apply models, and run the
//! simulation benchmarks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or malformed input,
//! 4 fit failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::{BenchmarkArgs, ConfigFile, FitArgs, PredictArgs, SimulateArgs};

#[derive(Debug, Parser)]
#[command(name = "sfm", version, about = "Sparse factor regression for one or several assays")]
struct Cli {
    /// TOML file with [simulate], [fit], [predict] and [benchmark] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/test CSVs and a truth sidecar.
    Simulate(SimulateArgs),
    /// Fit a model to a CSV and write model.json plus fitted values.
    Fit(FitArgs),
    /// Apply a saved model to a CSV.
    Predict(PredictArgs),
    /// Compare methods over simulated replicates.
    Benchmark(BenchmarkArgs),
}

fn run(cli: Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::read(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Simulate(mut args) => {
            if let Some(f) = &file.simulate {
                args.layer(f);
            }
            commands::simulate(&args)
        }
        Command::Fit(mut args) => {
            if let Some(f) = &file.fit {
                args.layer(f);
            }
            commands::fit_cmd(&args)
        }
        Command::Predict(mut args) => {
            if let Some(f) = &file.predict {
                args.layer(f);
            }
            commands::predict_cmd(&args)
        }
        Command::Benchmark(mut args) => {
            if let Some(f) = &file.benchmark {
                args.layer(f);
            }
            if let Some(n) = args.threads {
                if n == 0 {
                    return Err(CliError::Config("threads: must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Config(format!("threads: {e}")))?;
            }
            commands::benchmark(&args)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sfm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
