//! `flowid` — packet-to-prediction toolkit for early identification of the
//! service behind an HTTPS flow.

mod commands;
mod config;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::FileConfig;

/// Success.
pub const EXIT_OK: i32 = 0;
/// I/O, parse or configuration failure.
pub const EXIT_ERROR: i32 = 1;
/// Command succeeded but produced no output rows.
pub const EXIT_EMPTY: i32 = 2;

#[derive(Parser)]
#[command(
    name = "flowid",
    version,
    about = "Identify HTTPS services from TLS handshake packets plus the first application-data packets"
)]
struct Cli {
    /// Optional TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reassemble a pcap into flows and write the feature CSV.
    Extract(commands::extract::Args),
    /// Train a decision-tree model from a feature CSV.
    Train(commands::train::Args),
    /// Predict services for a trace or a feature CSV with a trained model.
    Predict(commands::predict::Args),
    /// Run evaluation experiments: threshold sweeps, train/test matrices,
    /// generic-vs-dedicated model comparisons.
    Evaluate(commands::evaluate::Args),
    /// Generate a synthetic labeled trace.
    Synth(commands::synth::Args),
    /// Measure identification latency and pipeline throughput.
    Bench(commands::bench::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("flowid: {err:#}");
            return ExitCode::from(EXIT_ERROR as u8);
        }
    };
    let result = match cli.command {
        Command::Extract(args) => commands::extract::run(args, &file),
        Command::Train(args) => commands::train::run(args, &file),
        Command::Predict(args) => commands::predict::run(args, &file),
        Command::Evaluate(args) => commands::evaluate::run(args, &file),
        Command::Synth(args) => commands::synth::run(args, &file),
        Command::Bench(args) => commands::bench::run(args, &file),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("flowid: {err:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
