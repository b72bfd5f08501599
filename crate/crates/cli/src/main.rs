mod args;
mod commands;
mod metrics_cmd;
mod viz;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use kbconv::camera::CameraError;
use kbconv::warp::WarpError;

use crate::args::{Cli, Command};

/// Usage or input problems.
const EXIT_INPUT: u8 = 2;
/// The request is geometrically impossible (e.g. rectifying beyond 180°).
const EXIT_INFEASIBLE: u8 = 3;
/// An iterative solver failed.
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(WarpError::FovExceeded { .. }) = cause.downcast_ref() {
            return EXIT_INFEASIBLE;
        }
        if let Some(CameraError::NoConvergence { .. }) = cause.downcast_ref() {
            return EXIT_NUMERICAL;
        }
    }
    EXIT_INPUT
}

/// Sizes the global pool from `KBCONV_THREADS` (unset or 0 = all cores).
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("KBCONV_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("KBCONV_THREADS must be a non-negative integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::GenOffsets(a) => commands::gen_offsets(a),
        Command::SynthFisheye(a) => commands::synth_fisheye(a),
        Command::Rectify(a) => commands::rectify(a),
        Command::Conv(a) => commands::conv(a),
        Command::Viz(a) => viz::viz(a),
        Command::Metrics(a) => metrics_cmd::metrics(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
