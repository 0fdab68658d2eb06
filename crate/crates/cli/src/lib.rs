//! Command line front end: configuration, field files, reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod fieldfile;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "akcy", version, about = "Generalized Monge-Ampere solver on almost Kahler 4-tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seed for every randomized construction.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Continuity-method solve.
    Solve(Common),
    /// Diagnostics on a saved potential.
    Verify(Common),
    /// Writes the analytic test case.
    Manufacture {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Compatible symplectic form from a taming one.
    Tame(Common),
    /// Kernel dimension of the Lejmi operator.
    Spectrum(Common),
}

fn context(c: &Common) -> Result<Context, CliError> {
    let mut config = config::parse_config(&c.config)?;
    if let Some(seed) = c.seed {
        config = config.with_seed(seed);
    }
    let out = c.out.clone().unwrap_or_else(|| config.out_dir.clone());
    commands::ensure_dir(&out)?;
    Ok(Context { config, out })
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Solve(c) => commands::solve(&context(&c)?),
        Command::Verify(c) => commands::verify(&context(&c)?),
        Command::Manufacture { common, epsilon } => commands::manufacture(&context(&common)?, epsilon),
        Command::Tame(c) => commands::tame(&context(&c)?),
        Command::Spectrum(c) => commands::spectrum(&context(&c)?),
    }
}

/// Runs one command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
