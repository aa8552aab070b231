mod algo;
mod commands;
mod data;
mod dist;
mod error;
mod experiment;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Train and evaluate classifiers for non-decomposable performance metrics.
#[derive(Debug, Parser)]
#[command(name = "nondecomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a classifier from a dataset CSV and write it as JSON.
    Train(commands::TrainArgs),
    /// Print the confusion matrix and metric values of a model on a dataset.
    Eval(commands::EvalArgs),
    /// Run an experiment grid from a JSON config and write a report CSV.
    Experiment(experiment::ExperimentArgs),
    /// Compare analytic smoothed-metric gradients with finite differences.
    Gradcheck(commands::GradcheckArgs),
    /// Optimal metric value over randomized or deterministic classifiers.
    Oracle(commands::OracleArgs),
    /// Emit a synthetic dataset and/or distribution.
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res: Result<(), CliError> = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Experiment(a) => experiment::experiment(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Synth(a) => commands::synth(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
