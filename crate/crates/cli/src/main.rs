//! `profile-shift`: runs profile-shift experiments described by a JSON config.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::config::{parse_config, ConfigError};
use crate::run::{CliError, Command};

/// Environment variable holding the worker-thread count.
const THREADS_ENV: &str = "PROFILE_SHIFT_THREADS";

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    /// Solve the shift problem, normalize, and check the result.
    Solve,
    /// Compare the matrix-free solve with a dense direct solve.
    Oracle,
    /// Eigenvalues and conditioning of the horizon propagator.
    Spectrum,
    /// Conditioning of the shift and backward problems across resolutions.
    Posedness,
    /// Error against the closed-form eigenfunction solution across resolutions.
    Convergence,
    /// All checks of `solve` plus the oracle comparison.
    Validate,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Solve => Command::Solve,
            CommandArg::Oracle => Command::Oracle,
            CommandArg::Spectrum => Command::Spectrum,
            CommandArg::Posedness => Command::Posedness,
            CommandArg::Convergence => Command::Convergence,
            CommandArg::Validate => Command::Validate,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "profile-shift", version, about)]
struct Args {
    command: CommandArg,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Nodes per axis for `posedness` and `convergence`.
    #[arg(long, value_delimiter = ',', default_value = "15,31,63")]
    resolutions: Vec<usize>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize =
        raw.trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| ConfigError::Validation {
                field: THREADS_ENV.into(),
                constraint: format!("must be a positive integer, got {raw:?}"),
            })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(())
}

fn execute(args: &Args) -> Result<bool, CliError> {
    configure_threads()?;
    let cfg = parse_config(&args.config)?;
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.outputs.directory));
    let summary = run::run(&cfg, args.command.into(), &out_dir, &args.resolutions)?;
    if !args.quiet {
        for line in &summary.lines {
            println!("{line}");
        }
        for f in &summary.files {
            println!("wrote {}", out_dir.join(&f.name).display());
        }
    }
    Ok(summary.passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: mandatory checks failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
