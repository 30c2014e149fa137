//! `belm-lab`: command-line front end for the BELM samplers and studies.
//!
//! Every run writes its artifact (CSV or JSON), a sidecar
//! `<artifact>.meta.json` holding the resolved config and SHA-256 hashes of
//! all outputs, and a one-line summary on stdout.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;

use belm_core::BelmError;
use clap::{Parser, Subcommand};

use config::Flags;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

/// Caps the worker pool when set to a positive integer.
pub const THREADS_ENV: &str = "BELM_LAB_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Io(_) => exit::IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => f.write_str(m),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<BelmError> for CliError {
    fn from(e: BelmError) -> Self {
        // core messages already name their category
        match e {
            BelmError::Config(m) => CliError::Config(m),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "belm-lab",
    version,
    about = "Bidirectional multistep diffusion sampler lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal k-step coefficients for given step sizes.
    Coeffs(Flags),
    /// Sample a trajectory from a seeded x_N.
    Sample(Flags),
    /// Invert a data-end state back to x_N.
    Invert(Flags),
    /// Reconstruction error of sample/invert roundtrips.
    Roundtrip(Flags),
    /// Global error and fitted order over step counts.
    Convergence(Flags),
    /// One-step error and fitted order over step sizes.
    Lte(Flags),
    /// Stability bound on a grid, plus perturbation growth with --delta.
    Stability(Flags),
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::OK
            };
        }
    };
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(summary) => {
            println!("{summary}");
            exit::OK
        }
        Err(e) => {
            eprintln!("belm-lab: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {value:?}"
            ))
        })?;
    // A pool that is already running (repeated in-process calls) is kept.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn dispatch(command: Command) -> Result<String, CliError> {
    use commands::*;
    match command {
        Command::Coeffs(f) => coeffs(f),
        Command::Sample(f) => sample(f),
        Command::Invert(f) => invert(f),
        Command::Roundtrip(f) => roundtrip(f),
        Command::Convergence(f) => convergence(f),
        Command::Lte(f) => lte(f),
        Command::Stability(f) => stability(f),
    }
}
