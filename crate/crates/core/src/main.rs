use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsoftbayes::cli::{run_experiment, ExperimentConfig, Mode, Overrides};

/// Q-Soft-Bayes experiments: regret games, stochastic maximum-likelihood
/// tomography and per-step scaling.
#[derive(Parser)]
#[command(name = "qsb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Soft-Bayes on a portfolio return stream, with regret against the best fixed portfolio.
    OpsGame(Overrides),
    /// Q-Soft-Bayes on a stream of PSD observations, with regret against the batch optimum.
    QstGame(Overrides),
    /// Stochastic Q-Soft-Bayes on a measurement dataset, compared with the batch ML estimate.
    MlRun(Overrides),
    /// Median per-step time of Q-Soft-Bayes across dimensions.
    ScalingBench(Overrides),
    /// Checks every invariant of a dataset or density-matrix file.
    Validate(Overrides),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, flags) = match cli.command {
        Command::OpsGame(o) => (Mode::OpsGame, o),
        Command::QstGame(o) => (Mode::QstGame, o),
        Command::MlRun(o) => (Mode::MlRun, o),
        Command::ScalingBench(o) => (Mode::ScalingBench, o),
        Command::Validate(o) => (Mode::Validate, o),
    };
    let outcome = ExperimentConfig::resolve(mode, flags).and_then(|config| run_experiment(&config));
    match outcome {
        Ok(summary) => {
            println!("{}", summary.out.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
