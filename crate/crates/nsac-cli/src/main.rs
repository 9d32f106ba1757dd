//! Batch front end for the two-phase compressible flow solver.
//!
//! Exit codes: 0 ok, 2 config error, 3 solver non-convergence, 4 identity
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nsac_core::Error;

mod check;
mod run;
mod study;

#[derive(Parser)]
#[command(name = "nsac", version, about = "Energy-stable solver for compressible two-phase flow on the periodic square")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Time-step a configured system; write energy.csv and field snapshots.
    Run {
        /// key = value config file (see `crates/nsac-core/src/config.rs` for the schema).
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Snapshot cadence in steps, overriding the config (0 = final only).
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Run the discrete identity battery on seeded random fields.
    Check {
        /// Optional config; only n and check_tol are consulted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for the random field draws.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Mesh-refinement study; writes study.csv with energies, defects, orders.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run {
            config,
            out,
            snapshot_every,
        } => run::cmd_run(&config, &out, snapshot_every),
        Cmd::Check { config, seed } => check::cmd_check(config.as_deref(), seed),
        Cmd::Study { config, out } => study::cmd_study(&config, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NonConvergence { .. } => 3u8,
                Error::Identity { .. } => 4,
                _ => 2,
            })
        }
    }
}

/// Worker cap from NSAC_THREADS; defaults to the machine parallelism.
/// Results never depend on the value, only wall time does.
fn thread_cap() -> Result<usize, Error> {
    match std::env::var("NSAC_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| Error::config(format!("NSAC_THREADS must be a positive integer, got '{s}'"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |v| v.get())),
    }
}
