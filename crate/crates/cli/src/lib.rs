//! Batch pipeline behind the `retention` binary: price ingestion, model
//! calibration, path simulation, fit reports and density demonstrations.
//!
//! Every command is deterministic given its inputs, flags and seed. JSON
//! outputs carry an RFC 3339 timestamp unless `--no-timestamp` is passed.

mod commands;
pub mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult, EXIT_DATA, EXIT_IO, EXIT_NUMERIC};

/// Seed used when neither the command line nor the config file sets one.
pub const DEFAULT_SEED: u64 = 42;

/// Fallback output directory when `--out-dir` and the config file are silent.
pub const OUT_DIR_ENV: &str = "RETENTION_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "retention", version, about = "Retention-model calibration and simulation for daily prices")]
pub struct Cli {
    /// TOML file with defaults for the flags below.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random draw [default: 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for outputs without an explicit path [default: $RETENTION_OUT_DIR or .].
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Leave the timestamp out of JSON outputs.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Daily log-returns of a price CSV.
    Returns(ReturnsArgs),
    /// Fit the normal and retention models to a returns CSV.
    Calibrate(CalibrateArgs),
    /// Simulate price paths from a fit file.
    Simulate(SimulateArgs),
    /// Full fit report for a price CSV: moments, overlays, Q-Q tables, paths.
    Report(ReportArgs),
    /// Exact lattice distribution after a number of steps.
    Lattice(LatticeArgs),
    /// Grid solution of the advection-diffusion or retention equation.
    Pde(PdeArgs),
    /// Synthetic Student-t price series.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CsvArgs {
    /// Date column of the price CSV [default: date].
    #[arg(long)]
    pub date_column: Option<String>,
    /// Price column of the price CSV [default: close].
    #[arg(long)]
    pub price_column: Option<String>,
    /// chrono format of the date column [default: %Y-%m-%d].
    #[arg(long)]
    pub date_format: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CalibrationArgs {
    /// Number of optimizer starts.
    #[arg(long)]
    pub multistart: Option<usize>,
    /// Search all three retention parameters instead of solving K2 from the
    /// variance.
    #[arg(long)]
    pub full_search: bool,
}

#[derive(Debug, Args)]
pub struct ReturnsArgs {
    /// Price CSV.
    pub input: PathBuf,
    /// Returns CSV [default: <out-dir>/returns.csv].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Returns CSV as written by `returns`.
    pub input: PathBuf,
    /// Fit JSON [default: <out-dir>/fit.json].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathModel {
    Gaussian,
    TProxy,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Fit JSON as written by `calibrate`.
    pub fit: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub model: PathModel,
    #[arg(long, default_value_t = 5)]
    pub paths: usize,
    #[arg(long, default_value_t = 250)]
    pub steps: usize,
    #[arg(long, default_value_t = 100.0)]
    pub start_price: f64,
    /// Paths CSV [default: <out-dir>/paths_<model>.csv].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Price CSV.
    pub input: PathBuf,
    /// Report directory, created if missing [default: <out-dir>].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Histogram bins [default: Freedman-Diaconis].
    #[arg(long)]
    pub bins: Option<usize>,
    /// Simulated paths per model [default: 5].
    #[arg(long)]
    pub paths: Option<usize>,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[command(flatten)]
    pub calibration: CalibrationArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleKind {
    Symmetric,
    Asymmetric,
    ThreeState,
}

#[derive(Debug, Args)]
pub struct LatticeArgs {
    #[arg(long, value_enum, default_value = "symmetric")]
    pub rule: RuleKind,
    /// Retention fraction (symmetric and asymmetric rules).
    #[arg(long, default_value_t = 0.0)]
    pub k: f64,
    /// Down-move probability (three-state rule).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Up-move probability (three-state rule).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub steps: u64,
    #[arg(long, default_value_t = 1.0)]
    pub dx: f64,
    /// Mass CSV [default: <out-dir>/lattice.csv].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PdeModel {
    AdvectionDiffusion,
    Retention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Minus,
    Plus,
}

#[derive(Debug, Args)]
pub struct PdeArgs {
    #[arg(long, value_enum, default_value = "advection-diffusion")]
    pub model: PdeModel,
    /// Drift D (advection-diffusion).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub drift: f64,
    /// V for advection-diffusion, K2 for retention.
    #[arg(long, default_value_t = 0.5)]
    pub diffusion: f64,
    /// Retention fraction k.
    #[arg(long, default_value_t = 0.0)]
    pub k: f64,
    /// Fourth-order coefficient K4.
    #[arg(long, default_value_t = 0.1)]
    pub k4: f64,
    /// Sign of the fourth-order term; `plus` is solved spectrally.
    #[arg(long, value_enum, default_value = "minus")]
    pub variant: Variant,
    /// Frequency cutoff of the plus variant [default: the natural cutoff].
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long, default_value_t = 0.02)]
    pub dx: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub dt: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_final: f64,
    /// Grid half-width [default: wide enough for the final variance].
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub snapshots: usize,
    /// Final density CSV [default: <out-dir>/pde.csv].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of prices.
    #[arg(long, default_value_t = 750)]
    pub days: usize,
    #[arg(long, default_value_t = 5.0)]
    pub df: f64,
    #[arg(long, default_value_t = 0.015)]
    pub scale: f64,
    #[arg(long, default_value_t = 2e-4, allow_hyphen_values = true)]
    pub drift: f64,
    #[arg(long, default_value_t = 30.0)]
    pub start_price: f64,
    /// First trading day; later dates skip weekends.
    #[arg(long, default_value = "2020-01-02")]
    pub start_date: String,
    /// Price CSV [default: <out-dir>/synthetic_prices.csv].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    let settings = commands::Settings::resolve(cli, &file);
    match &cli.command {
        Command::Returns(a) => commands::returns(a, &settings, &file),
        Command::Calibrate(a) => commands::calibrate(a, &settings, &file),
        Command::Simulate(a) => commands::simulate(a, &settings),
        Command::Report(a) => commands::report(a, &settings, &file),
        Command::Lattice(a) => commands::lattice(a, &settings),
        Command::Pde(a) => commands::pde(a, &settings),
        Command::Synth(a) => commands::synth(a, &settings),
    }
}
