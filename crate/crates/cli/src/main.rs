//! `psn`: run experiments, sweeps, trace replays, trace generation and the
//! acceptance checks from a TOML configuration.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psn_core::Error;

#[derive(Debug, Parser)]
#[command(name = "psn", version, about = "Contact-process simulator for interest-aware forwarding")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// One experiment: results CSV and summary JSON.
    Run(Common),
    /// Cartesian sweep over the `[sweep]` axes: one summary row per cell.
    Sweep(Common),
    /// Replay random messages over a contact trace.
    Replay(Common),
    /// Write a synthetic contact trace and its profile table.
    GenTrace(Common),
    /// Run the acceptance checks and write a report.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Run only these check numbers (repeatable); default is all.
        #[arg(long = "check", value_name = "N")]
        checks: Vec<u32>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dotted-key override such as `experiment.n=500` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Master seed (overrides `experiment.master_seed`).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

/// Outcome of a verb that completed without an error.
pub enum Outcome {
    Ok,
    ChecksFailed,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.verb {
        Verb::Run(c) | Verb::Sweep(c) | Verb::Replay(c) | Verb::GenTrace(c) => c,
        Verb::Validate { common, .. } => common,
    };
    if let Some(w) = common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: cannot start {w} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let result = commands::load(common).and_then(|ctx| match &cli.verb {
        Verb::Run(_) => commands::run(&ctx),
        Verb::Sweep(_) => commands::sweep(&ctx),
        Verb::Replay(_) => commands::replay(&ctx),
        Verb::GenTrace(_) => commands::gen_trace(&ctx),
        Verb::Validate { checks, .. } => commands::validate(&ctx, checks),
    });
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
