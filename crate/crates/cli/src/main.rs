mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ptia_core::{Error, ErrorKind};

/// Behavioral simulator for a programmable transimpedance glucose-sensing
/// readout chain.
#[derive(Debug, Parser)]
#[command(name = "ptia", version)]
struct Cli {
    /// Parameter profile (key = value sections). Defaults to the shipped
    /// calibrated profile.
    #[arg(long, global = true, value_name = "PATH")]
    profile: Option<PathBuf>,

    /// Directory for written files (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Output file formats, comma separated.
    #[arg(
        long,
        global = true,
        value_enum,
        value_delimiter = ',',
        default_value = "csv"
    )]
    format: Vec<Format>,

    /// Seed for stochastic analyses; overrides the profile.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decode a select code and report the closed-form transimpedance.
    Gain(GainArgs),
    /// Large-signal DC transfer sweep.
    Sweep(SweepArgs),
    /// Input-referred thermal noise over a band.
    Noise(NoiseArgs),
    /// Sinusoidal transient and total harmonic distortion.
    Thd(ThdArgs),
    /// Monte Carlo mismatch analysis.
    Montecarlo(MonteCarloArgs),
    /// Process, supply and temperature corner lookup.
    Pvt(PvtArgs),
    /// Fit a concentration calibration curve.
    Calibrate(CalibrateArgs),
    /// Convert between voltage, current and concentration.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct Select {
    /// Three-bit select code s1 s2 s3, e.g. 101.
    #[arg(long, default_value = "000")]
    pub select: String,
}

#[derive(Debug, Args)]
pub struct GainArgs {
    /// Three-bit select code s1 s2 s3, e.g. 101.
    pub code: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub select: Select,
    /// Lower sensor current (A).
    #[arg(long)]
    pub i_min: Option<f64>,
    /// Upper sensor current (A).
    #[arg(long)]
    pub i_max: Option<f64>,
    /// Number of grid points.
    #[arg(long)]
    pub points: Option<usize>,
    /// Logarithmic grid spacing.
    #[arg(long)]
    pub log: bool,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Lower band edge (Hz).
    #[arg(long)]
    pub f_low: Option<f64>,
    /// Upper band edge (Hz).
    #[arg(long)]
    pub f_high: Option<f64>,
    /// Also print each PSD contribution.
    #[arg(long)]
    pub terms: bool,
}

#[derive(Debug, Args)]
pub struct ThdArgs {
    #[command(flatten)]
    pub select: Select,
    /// Sinusoid amplitude (A).
    #[arg(long)]
    pub i_amp: f64,
    /// DC sensor current (A); defaults to the profile stimulus.
    #[arg(long)]
    pub i_dc: Option<f64>,
    /// Fundamental frequency (Hz).
    #[arg(long)]
    pub f0: Option<f64>,
    /// Highest harmonic included.
    #[arg(long, default_value_t = ptia_core::distortion::DEFAULT_HARMONICS)]
    pub harmonics: usize,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub select: Select,
    /// Number of samples; defaults to the profile.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Metrics: transimpedance, thd, irn, v_out@<A>, param:<key>.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "transimpedance,v_out@1.8e-4,irn"
    )]
    pub metric: Vec<String>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Process,
    Supply,
    Temperature,
}

#[derive(Debug, Args)]
pub struct PvtArgs {
    /// Corner axis.
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Query points (corner name or value); all anchors when omitted.
    #[arg(long, value_delimiter = ',')]
    pub at: Vec<String>,
    /// Corner table CSV replacing the built-in one.
    #[arg(long, value_name = "PATH")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveTarget {
    Current,
    Voltage,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Measurement CSV (columns conc_mM, i_A, v_V, t_s). Without it, the
    /// voltage curve of the simulated chain is fitted.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Quantity to regress against concentration.
    #[arg(long, value_enum, default_value = "voltage")]
    pub target: CurveTarget,
    /// Report per-scan peak currents of a voltammetry trace instead of fitting.
    #[arg(long)]
    pub cv: bool,
    #[command(flatten)]
    pub select: Select,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("value").required(true))]
pub struct ConvertArgs {
    /// Saved curve; defaults to the 1.19 V / 1.67 V endpoint curve.
    #[arg(long, value_name = "PATH")]
    pub curve: Option<PathBuf>,
    /// Output voltage to convert to concentration (V).
    #[arg(long, group = "value")]
    pub voltage: Option<f64>,
    /// Sensor current to convert to concentration (A).
    #[arg(long, group = "value")]
    pub current: Option<f64>,
    /// Concentration to convert with the curve (mM).
    #[arg(long, group = "value")]
    pub conc: Option<f64>,
}

pub struct Context {
    pub profile: ptia_core::Profile,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::DataFormat => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> ptia_core::Result<()> {
    let profile = match &cli.profile {
        Some(path) => ptia_core::Profile::load(path)?,
        None => ptia_core::Profile::calibrated(),
    };
    let mut formats = cli.format;
    formats.dedup();
    let ctx = Context {
        profile,
        out: cli.out,
        formats,
        seed: cli.seed,
    };
    match cli.command {
        Command::Gain(a) => commands::gain(&ctx, &a),
        Command::Sweep(a) => commands::sweep(&ctx, &a),
        Command::Noise(a) => commands::noise(&ctx, &a),
        Command::Thd(a) => commands::thd(&ctx, &a),
        Command::Montecarlo(a) => commands::montecarlo(&ctx, &a),
        Command::Pvt(a) => commands::pvt(&ctx, &a),
        Command::Calibrate(a) => commands::calibrate(&ctx, &a),
        Command::Convert(a) => commands::convert(&ctx, &a),
    }
}
