//! `prism` command-line workflows.
//!
//! Every command writes a `RunManifest` next to its outputs. Exit status is 0
//! when every item succeeded, 1 when some targets failed or the run aborted,
//! and 2 for usage errors (bad flags, missing input files).

/// `println!` unless `--quiet` was given.
macro_rules! say {
    ($($t:tt)*) => {
        if !$crate::quiet() {
            println!($($t)*);
        }
    };
}

pub mod args;
pub mod commands;
pub mod io;
pub mod manifest;
pub mod plot;
pub mod registry;

use std::ffi::OsString;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::Parser;

use args::{Cli, Command};

static QUIET: AtomicBool = AtomicBool::new(false);

pub(crate) fn quiet() -> bool {
    QUIET.load(Ordering::Relaxed)
}

/// Error class that maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Per-item failure count of a finished command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub failures: usize,
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    QUIET.store(cli.global.quiet, Ordering::Relaxed);
    if let Some(n) = cli.global.threads {
        // Ignore the error when a pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Materials(a) => commands::data::materials(&cli.global, a),
        Command::GenData(a) => commands::data::gen_data(&cli.global, a),
        Command::Train(a) => commands::train::train(&cli.global, a),
        Command::Infer(a) => commands::design::infer(&cli.global, a),
        Command::Sa(a) => commands::design::sa(&cli.global, a),
        Command::Diffopt(a) => commands::design::diffopt(&cli.global, a),
        Command::Eval(a) => commands::report::eval(&cli.global, a),
        Command::Plot(a) => commands::report::plot(&cli.global, a),
        Command::Extrapolate(a) => commands::report::extrapolate(&cli.global, a),
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(o) if o.failures == 0 => 0,
        Ok(o) => {
            eprintln!("{} item(s) failed", o.failures);
            1
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                2
            } else {
                1
            }
        }
    }
}
