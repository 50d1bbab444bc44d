//! `dialectid`: train, evaluate and apply recurrent dialect classifiers.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data format, 3 numeric failure.

mod commands;
mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dialectid::Error;

#[derive(Debug, Parser)]
#[command(name = "dialectid", version, about = "LSTM and B-LSTM dialect identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a classifier and write a checkpoint.
    Train(commands::TrainArgs),
    /// Score a checkpoint on labelled data.
    Eval(commands::EvalArgs),
    /// Label unlabelled input.
    Predict(commands::PredictArgs),
    /// Metrics from a confusion matrix or label pairs.
    Metrics(commands::MetricsArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(commands::GradcheckArgs),
    /// Generate a synthetic dialect dataset.
    Synth(commands::SynthArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io { .. } => 1,
        Error::Numeric(_) => 3,
        Error::Shape(_) | Error::Index(_) | Error::Format { .. } | Error::Version { .. } | Error::Degenerate(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .format(|buf, record| writeln!(buf, "[{}] {}", record.level().as_str().to_lowercase(), record.args()))
        .init();

    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
