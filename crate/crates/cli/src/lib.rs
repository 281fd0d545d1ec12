//! Command-line front end: configuration, the audit entry point, spectrum
//! and sweep runs, and deterministic CSV/JSON emission.
//!
//! Exit codes: 0 success, 1 audit assertion failure, 2 configuration or
//! I/O error, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use optospring::gauge_series::Fault;

use crate::config::{Format, Overrides, RunConfig, OUTPUT_ENV};
use crate::output::{render, Table};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<optospring::Error> for CliError {
    fn from(e: optospring::Error) -> Self {
        use optospring::Error as E;
        match e {
            E::Accuracy { .. } | E::NonConvergence { .. } | E::AmbiguousBranch { .. } => {
                CliError::Numerical(e.to_string())
            }
            E::Domain(_) | E::Contract(_) | E::BasisMismatch { .. } | E::DimensionGuard { .. } => {
                CliError::Config(e.to_string())
            }
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAILED: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "optospring",
    version,
    about = "Operator audit and spectra of the moving-mirror cavity Hamiltonian"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Mode cutoff K.
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    /// Per-mode occupation cap N.
    #[arg(long, global = true)]
    pub fock: Option<usize>,
    /// Cap C on the total occupation.
    #[arg(long = "total-cap", global = true)]
    pub total_cap: Option<usize>,
    /// Negative control: gauge-sign or bch-half-sign.
    #[arg(long = "seed-faults", global = true)]
    pub seed_faults: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Mixing coefficients with quadrature and completeness residuals.
    Coefficients,
    /// Algebraic identities and coefficient findings.
    Audit,
    /// Low-lying spectrum and dressed-vacuum observables.
    Spectrum,
    /// Spectrum observables over a parameter grid.
    Sweep,
}

/// Resolves the configuration from the file, flags and environment.
pub fn resolve_config(cli: &Cli, env_out: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        modes: cli.modes,
        per_mode_max: cli.fock,
        total_cap: cli.total_cap,
        format: cli.format,
        out: cli.out.clone(),
    };
    base.apply(&overrides, env_out)
}

fn emit(table: &Table, config: &RunConfig) -> Result<(), CliError> {
    let text = render(table, config.output.format, config.output.precision);
    match &config.output.path {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write output: {e}"))),
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let env_out = std::env::var_os(OUTPUT_ENV).map(PathBuf::from);
    let config = resolve_config(cli, env_out)?;
    let fault = match &cli.seed_faults {
        Some(name) => Some(
            name.parse::<Fault>()
                .map_err(|e| CliError::Config(e.to_string()))?,
        ),
        None => None,
    };
    match cli.command {
        Command::Coefficients => {
            emit(&commands::cmd_coefficients(&config)?, &config)?;
            Ok(EXIT_OK)
        }
        Command::Audit => {
            let (table, passed) = commands::cmd_audit(&config, fault)?;
            emit(&table, &config)?;
            Ok(if passed { EXIT_OK } else { EXIT_AUDIT_FAILED })
        }
        Command::Spectrum => {
            emit(&commands::cmd_spectrum(&config)?, &config)?;
            Ok(EXIT_OK)
        }
        Command::Sweep => {
            let (table, successes) = commands::cmd_sweep(&config)?;
            emit(&table, &config)?;
            Ok(if successes > 0 {
                EXIT_OK
            } else {
                EXIT_NUMERICAL
            })
        }
    }
}

/// Runs one invocation and returns its exit code; diagnostics go to
/// standard error.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => {
            if code == EXIT_AUDIT_FAILED {
                eprintln!("optospring: audit assertions failed");
            } else if code == EXIT_NUMERICAL {
                eprintln!("optospring: no sweep point succeeded");
            }
            code
        }
        Err(e) => {
            eprintln!("optospring: {e}");
            e.exit_code()
        }
    }
}
