//! `mixdiff`: out-of-distribution scoring by perturbing inputs and comparing
//! against in-distribution oracles.

mod attack;
mod common;
mod detect;
mod error;
mod output;
mod serve;
mod theory;
mod tools;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "mixdiff", version, about = "Perturb-and-compare OOD detection")]
struct Cli {
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score targets and write results, metrics and analyses.
    Detect(detect::DetectArgs),
    /// Run the closed-form checks on a synthetic mixture.
    VerifyTheory(theory::TheoryArgs),
    /// Serve a model over HTTP.
    Serve(serve::ServeArgs),
    /// Sweep PGD strength and record detection AUROC.
    Attack(attack::AttackArgs),
    /// Fit a linear softmax classifier.
    Fit(tools::FitArgs),
    /// Sample a synthetic dataset.
    Synth(tools::SynthArgs),
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Detect(a) => detect::run(a),
        Command::VerifyTheory(a) => theory::run(a),
        Command::Serve(a) => serve::run(a),
        Command::Attack(a) => attack::run(a),
        Command::Fit(a) => tools::fit(a),
        Command::Synth(a) => tools::synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .parse_env("MIXDIFF_LOG")
        .init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.module());
            ExitCode::from(e.exit_code())
        }
    }
}
