mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Command, RunArgs, RunConfig};

#[derive(Parser)]
#[command(name = "vqr", version, about = "Vector quantiles and vector quantile regression")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Vector quantile of the outcomes, ignoring covariates.
    Vq(RunArgs),
    /// Vector quantile regression with a mean-independence constraint.
    Vqr(RunArgs),
    /// Level-by-level quantile regression for a scalar outcome.
    Qr1d(RunArgs),
    /// Compare the transport and monotone quantile regression values.
    Equiv(RunArgs),
    /// Re-validate a saved solution file.
    Check(RunArgs),
    /// Write a synthetic sample and its generator metadata.
    Gen(RunArgs),
}

impl Cmd {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Cmd::Vq(a) => (Command::Vq, a),
            Cmd::Vqr(a) => (Command::Vqr, a),
            Cmd::Qr1d(a) => (Command::Qr1d, a),
            Cmd::Equiv(a) => (Command::Equiv, a),
            Cmd::Check(a) => (Command::Check, a),
            Cmd::Gen(a) => (Command::Gen, a),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VQR_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (command, args) = cli.command.split();
    let result = RunConfig::from_args(command, args).and_then(|cfg| commands::run(&cfg));
    match result {
        Ok(outcome) => {
            match serde_json::to_string_pretty(&outcome) {
                Ok(s) => println!("{s}"),
                Err(e) => eprintln!("error: {e}"),
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
