//! `lamb-strip`: guided modes, scattering and half-strip solutions of a traction-free elastic strip.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lamb_strip::Error;

#[derive(Parser)]
#[command(name = "lamb-strip", version, about = "Guided elastic waves in a traction-free strip")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config; default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and scattering rows.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Multiplies every self-check tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Axis modes with multiplicities, flux and classification.
    Modes,
    /// Axis wavenumbers along a frequency sweep, tracked by profile.
    Dispersion,
    /// Scattering matrix of the free end.
    Scatter,
    /// Half-strip Dirichlet problem for the trace in `halfstrip.g_file`.
    Halfstrip,
    /// Strip asymptotics: two line solves against the residue sum.
    StripVerify,
    /// Full invariant suite.
    Selfcheck,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Assumption(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
            CliError::Assumption(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config error",
            CliError::Numerical(_) => "numerical failure",
            CliError::Assumption(_) => "Assumption violation",
            CliError::Io(_) => "io error",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Assumption(m) | CliError::Io(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidMaterial(_)
            | Error::InvalidGeometry(_)
            | Error::InvalidFrequency(_)
            | Error::InvalidDiscretization(_)
            | Error::UnsupportedOrder(_) => CliError::Config(msg),
            Error::AssumptionViolation(_) => CliError::Assumption(msg),
            _ => CliError::Numerical(msg),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    if !(cli.tolerance_scale > 0.0) {
        return Err(CliError::Config(format!("--tolerance-scale must be positive, got {}", cli.tolerance_scale)));
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--workers: {e}")))?;
    }
    let cfg = config::RunConfig::load(&path)?;
    let out = cli
        .out
        .or_else(|| cfg.output.as_ref().map(|p| cfg.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("create {}: {e}", out.display())))?;
    let ctx = commands::Context { cfg, out, tolerance_scale: cli.tolerance_scale };
    match cli.verb {
        Verb::Modes => commands::cmd_modes(&ctx),
        Verb::Dispersion => commands::cmd_dispersion(&ctx),
        Verb::Scatter => commands::cmd_scatter(&ctx),
        Verb::Halfstrip => commands::cmd_halfstrip(&ctx),
        Verb::StripVerify => commands::cmd_strip_verify(&ctx),
        Verb::Selfcheck => commands::cmd_selfcheck(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lamb-strip: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
