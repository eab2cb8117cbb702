//! `symaxis`: reflection-axis estimation, symmetrisation, Richardson–Lucy
//! deconvolution and Monte Carlo experiments from the command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use symaxis::image_model::TargetId;
use symaxis::symmetry::{CurvatureEstimator, QuantileConvention};
use symaxis::WeightScheme;

use crate::config::{parse_interval, parse_name};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "symaxis",
    version,
    about = "Reflection-symmetry axes of noisy images and PSF calibration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the reflection axis of an image, with a confidence interval.
    EstimateAxis(EstimateArgs),
    /// Average an image over the reflection group of an axis.
    Symmetrize(SymmetrizeArgs),
    /// Richardson–Lucy deconvolution of an image by a PSF.
    Deconvolve(DeconvolveArgs),
    /// Run a Monte Carlo study described by a JSON config.
    Experiment(ExperimentArgs),
    /// Write a synthetic test image.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Image file (.csv or .pgm).
    pub input: PathBuf,
    /// JSON file with defaults for the options below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Largest Zernike order in the contrast.
    #[arg(long)]
    pub n_max: Option<u32>,
    /// Search interval `a:b` in radians, within [0, π].
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
    pub interval: Option<(f64, f64)>,
    /// Nominal non-coverage of the confidence interval.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `midpoint` or `pixel_integrated` quadrature weights.
    #[arg(long, value_parser = parse_name::<WeightScheme>)]
    pub scheme: Option<WeightScheme>,
    /// Apply the Anscombe transform 2√(x + 3/8) first (Poisson counts).
    #[arg(long)]
    pub anscombe: bool,
    /// `two_sided` (z at 1 − α/2) or `literal` (z at 1 − α).
    #[arg(long, value_parser = parse_name::<QuantileConvention>)]
    pub quantile: Option<QuantileConvention>,
    /// `at_estimate` or `plug_in` curvature in the interval width.
    #[arg(long, value_parser = parse_name::<CurvatureEstimator>)]
    pub curvature: Option<CurvatureEstimator>,
    /// Also write the contrast curve (1024 angles) to this CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SymmetrizeArgs {
    pub input: PathBuf,
    /// Axis angle in radians.
    #[arg(
        long,
        required_unless_present = "auto",
        conflicts_with = "auto",
        allow_hyphen_values = true
    )]
    pub beta: Option<f64>,
    /// Estimate the axis first (accepts the estimate-axis options below).
    #[arg(long)]
    pub auto: bool,
    #[arg(long)]
    pub n_max: Option<u32>,
    #[arg(long, value_parser = parse_interval)]
    pub interval: Option<(f64, f64)>,
    #[arg(long)]
    pub anscombe: bool,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeconvolveArgs {
    /// Observed image.
    pub data: PathBuf,
    /// PSF (square, odd size; rescaled to unit sum).
    pub psf: PathBuf,
    #[arg(long, default_value_t = symaxis::psf::deconv::DEFAULT_ITERATIONS)]
    pub iters: usize,
    /// Ground truth: report the best iterates and write the closest one.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Distance selecting the written iterate when `--truth` is given: `L1` or `L2`.
    #[arg(long, default_value = "L2", value_parser = parse_name::<symaxis::psf::DistanceMetric>)]
    pub metric: symaxis::psf::DistanceMetric,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Base seed (overrides the config and `SEED`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// `f1`, `f2`, `f3` (test targets on the disc) or `bead`.
    #[arg(long)]
    pub target: String,
    /// Pixels per side (targets only).
    #[arg(long, default_value_t = 51)]
    pub m: usize,
    /// Peak over noise standard deviation (targets only).
    #[arg(long, default_value_t = 5.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Write the noise-free image.
    #[arg(long)]
    pub clean: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: PathBuf,
}

pub enum GenerateTarget {
    Disc(TargetId),
    Bead,
}

impl GenerateArgs {
    pub fn parsed_target(&self) -> Result<GenerateTarget, CliError> {
        if self.target == "bead" {
            return Ok(GenerateTarget::Bead);
        }
        self.target
            .parse()
            .map(GenerateTarget::Disc)
            .map_err(|_| CliError::Usage(format!("unknown target '{}' (f1, f2, f3 or bead)", self.target)))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::EstimateAxis(a) => commands::estimate_axis(&a),
        Command::Symmetrize(a) => commands::symmetrize(&a),
        Command::Deconvolve(a) => commands::deconvolve(&a),
        Command::Experiment(a) => commands::experiment(&a),
        Command::Generate(a) => commands::generate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
