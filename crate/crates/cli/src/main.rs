use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use structinf::commands::run_command;
use structinf::config::{Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "structinf", version, about = "Structured-sparsity penalized GLMs with debiased inference")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a penalized GLM and write fit.json.
    Fit(Flags),
    /// Debias selected coefficients and write debias.json.
    Debias(Flags),
    /// Wald test of a linear restriction; writes test.json.
    Test(Flags),
    /// Monte Carlo campaign; writes simulate.json and simulate_table.txt.
    Simulate(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long)]
    response: Option<String>,
    /// Prepend an unpenalized intercept column (`--intercept false` to drop it).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    intercept: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Cmd::Fit(f) => (Command::Fit, f),
        Cmd::Debias(f) => (Command::Debias, f),
        Cmd::Test(f) => (Command::Test, f),
        Cmd::Simulate(f) => (Command::Simulate, f),
    };
    let mut config = match &flags.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        data: flags.data,
        response: flags.response,
        intercept: flags.intercept,
        seed: flags.seed,
        workers: flags.workers,
        out: flags.out,
    });
    match run_command(command, &config) {
        Ok(artifacts) => {
            for f in artifacts.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
