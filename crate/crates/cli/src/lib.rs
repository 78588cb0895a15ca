//! Command-line front end: configuration files, reproduction presets and the
//! `spiral-lattice` subcommands.

pub mod commands;
pub mod config;
pub mod presets;

use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, Mode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Usage,
    Numerical,
    Validation,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Usage => EXIT_USAGE,
            Self::Numerical => EXIT_NUMERICAL,
            Self::Validation => EXIT_VALIDATION,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Self { kind: FailureKind::Usage, error: e.into() }
    }

    pub fn numerical(e: impl Into<anyhow::Error>) -> Self {
        Self { kind: FailureKind::Numerical, error: e.into() }
    }

    pub fn validation(e: impl Into<anyhow::Error>) -> Self {
        Self { kind: FailureKind::Validation, error: e.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::usage(e),
            _ => Self::validation(e),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "spiral-lattice", version, about = "Spiral waves under square-lattice symmetry breaking")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct OutArgs {
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, clap::Args)]
pub struct PdeOverrides {
    /// Override the run length.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Override the grid size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Write the final field snapshot of every run.
    #[arg(long)]
    pub snapshots: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a config and check the perturbation for Z4 symmetry.
    Validate { config: PathBuf },
    /// Integrate the center-bundle equations.
    OdeRun {
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// First-order averaged field (or `M` when omega = 0) with its equilibria and cycles.
    Average {
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Predicted anchored, meandering or travelling states.
    Predict {
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the reaction-diffusion experiment and classify the tip motion.
    PdeRun {
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        overrides: PdeOverrides,
    },
    /// Classify a tip-trajectory CSV.
    TipAnalyze {
        tips: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        transient: f64,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        /// Write the classification here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a bundled reproduction preset.
    Repro {
        preset: String,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        overrides: PdeOverrides,
    },
    /// Print a bundled preset config, or list presets when no name is given.
    Preset { name: Option<String> },
    /// Scan omega and report the predicted mode (exploratory).
    Sweep {
        config: PathBuf,
        #[arg(long)]
        omega_min: f64,
        #[arg(long)]
        omega_max: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.kind.exit_code()
        }
    }
}
