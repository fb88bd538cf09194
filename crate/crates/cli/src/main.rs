//! `triscale` command line tool. Exit codes: 0 success, 2 configuration,
//! 3 solver or failed residual check, 4 integrator, 5 internal resonance.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] triscale::Error),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
    #[error("residual check failed: {0}")]
    Residual(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => e.exit_code() as u8,
            CliError::Output(_) => 1,
            CliError::Residual(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "triscale", version, about = "Multiple-scale asymptotics of weakly nonlinear oscillators with numerical checks")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Relative integrator tolerance, overrides the config.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Absolute integrator tolerance, overrides the config.
    #[arg(long, global = true)]
    abs_tol: Option<f64>,
    /// Assert that no random number generator is used.
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Backbone curve `a, nu, nu_order1`.
    Backbone,
    /// Stationary frequency response curve.
    Response,
    /// Closed-form primary-resonance peak (JSON).
    Peak,
    /// Direct integration, physical trajectory CSV.
    Simulate,
    /// Amplitude spectrum of a simulated component and its dominant peaks.
    Spectrum {
        /// Peak list output; standard error when absent.
        #[arg(long)]
        peaks: Option<PathBuf>,
    },
    /// Run the validation experiment of the config (JSON report).
    Validate,
    /// Eigenbasis and modal reduction (JSON).
    Modal,
}

fn emit(path: Option<&Path>, bytes: &[u8], fallback: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => fallback.write_all(bytes)?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let cfg = RunConfig::load(path)?;
    // The library draws no random numbers; the flag only documents the intent.
    let _ = cli.seedless;
    let tol = cfg.tolerances(cli.rel_tol, cli.abs_tol)?;
    let out = match &cli.command {
        Command::Backbone => commands::backbone(&cfg)?,
        Command::Response => commands::response(&cfg)?,
        Command::Peak => commands::peak(&cfg)?,
        Command::Simulate => commands::simulate(&cfg, tol)?,
        Command::Spectrum { .. } => commands::spectrum_cmd(&cfg, tol)?,
        Command::Validate => commands::validate(&cfg, tol)?,
        Command::Modal => commands::modal(&cfg)?,
    };
    emit(cli.out.as_deref(), &out.main, &mut std::io::stdout().lock())?;
    if let (Some(extra), Command::Spectrum { peaks }) = (&out.extra, &cli.command) {
        emit(peaks.as_deref(), extra, &mut std::io::stderr().lock())?;
    }
    if !out.failed_checks.is_empty() {
        return Err(CliError::Residual(out.failed_checks.join("; ")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("triscale: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
