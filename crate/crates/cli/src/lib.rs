//! Command-line front end: `segment`, `corrupt`, `evaluate`, `sweep`,
//! `synthesize` and `check`.
//!
//! Exit codes: 0 on success, 1 on runtime errors (I/O, solver failures,
//! violated invariants), 2 on usage errors. `AITVSEG_THREADS` sets the size
//! of the worker pool.

pub mod args;
pub mod commands;
pub mod io;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] aitvseg::Error),
    #[error("{0}")]
    Runtime(String),
    #[error("invariant check failed:\n{0}")]
    Invariants(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Worker count from `AITVSEG_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("AITVSEG_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Segment(a) => commands::cmd_segment(a).map(drop),
        Command::Corrupt(a) => commands::cmd_corrupt(a).map(drop),
        Command::Evaluate(a) => commands::cmd_evaluate(a).map(drop),
        Command::Sweep(a) => commands::cmd_sweep(a).map(drop),
        Command::Synthesize(a) => commands::cmd_synthesize(a).map(drop),
        Command::Check(a) => commands::cmd_check(a).map(drop),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = threads_from_env() {
        // Fails only if the global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
