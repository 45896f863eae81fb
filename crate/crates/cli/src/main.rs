//! `hjb`: batch front end for condition checks and the discounted, ergodic,
//! parabolic and Monte Carlo pipelines.
//!
//! Exit codes: 0 success, 1 numerical or condition failure, 2 configuration
//! error. Every run that gets past argument parsing writes `manifest.json`
//! into the output directory.

mod args;
mod commands;
mod output;
mod setup;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::output::{write_manifest, OutDir};

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration, detected before any compute.
    Config(String),
    /// Solver failure, blow-up, or a condition that does not hold.
    Numerical(String),
}

impl Failure {
    pub fn config(e: hjb_core::Error) -> Self {
        Failure::Config(e.to_string())
    }

    pub fn numerical(e: hjb_core::Error) -> Self {
        Failure::Numerical(e.to_string())
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 1,
            Failure::Config(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) => m,
        }
    }
}

fn run(command: &Command) -> Result<(), Failure> {
    let common = command.common();
    let setup = setup::resolve(common)?;
    let out = OutDir::create(&common.out)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build_global()
        .map_err(|e| Failure::Config(format!("cannot start thread pool: {e}")))?;
    let manifest = |status: &str| {
        write_manifest(
            &out,
            command.name(),
            command.to_json(),
            Some(setup.describe()),
            common.seed,
            common.threads,
            status,
        )
    };
    manifest("running")?;
    let result = match command {
        Command::Check(a) => commands::check(a, &setup, &out),
        Command::Discounted(a) => commands::discounted(a, &setup, &out),
        Command::Ergodic(a) => commands::ergodic(a, &setup, &out),
        Command::Parabolic(a) => commands::parabolic(a, &setup, &out),
        Command::Oracle(a) => commands::oracle(a, &setup, &out),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(f) => format!("exit {}: {}", f.code(), f.message()),
    };
    manifest(&status)?;
    result
}

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {}", f.message());
            return ExitCode::from(f.code());
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
