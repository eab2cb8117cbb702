//! JSON run configurations. Unknown keys are rejected; command-line flags
//! override file values, and `SEED` overrides `base_seed` from the file.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use symaxis::experiments::{AxisStudyConfig, PsfBenchmarkConfig};
use symaxis::symmetry::{CurvatureEstimator, QuantileConvention};
use symaxis::WeightScheme;

use crate::error::CliError;

/// Settings for `estimate-axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub n_max: u32,
    pub interval: (f64, f64),
    pub alpha: f64,
    pub scheme: WeightScheme,
    pub anscombe: bool,
    pub quantile: QuantileConvention,
    pub curvature: CurvatureEstimator,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            n_max: 7,
            interval: (0.0, PI),
            alpha: 0.05,
            scheme: WeightScheme::Midpoint,
            anscombe: false,
            quantile: QuantileConvention::TwoSided,
            curvature: CurvatureEstimator::AtEstimate,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let (a, b) = self.interval;
        if !(0.0 <= a && a < b && b <= PI + 1e-12) {
            return Err(CliError::Usage(format!(
                "interval {a}:{b} must satisfy 0 <= a < b <= pi"
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// A Monte Carlo study, selected by the `experiment` key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    BetaDistribution(AxisStudyConfig),
    CiCoverage(AxisStudyConfig),
    PsfBenchmark(PsfBenchmarkConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::BetaDistribution(_) => "beta_distribution",
            ExperimentConfig::CiCoverage(_) => "ci_coverage",
            ExperimentConfig::PsfBenchmark(_) => "psf_benchmark",
        }
    }

    pub fn set_replicates(&mut self, n: usize) {
        match self {
            ExperimentConfig::BetaDistribution(c) | ExperimentConfig::CiCoverage(c) => c.replicates = n,
            ExperimentConfig::PsfBenchmark(c) => c.replicates = n,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::BetaDistribution(c) | ExperimentConfig::CiCoverage(c) => c.base_seed = seed,
            ExperimentConfig::PsfBenchmark(c) => c.base_seed = seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let r = match self {
            ExperimentConfig::BetaDistribution(c) | ExperimentConfig::CiCoverage(c) => c.validate(),
            ExperimentConfig::PsfBenchmark(c) => c.validate(),
        };
        r.map_err(|e| CliError::Usage(format!("invalid {} config: {e}", self.name())))
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// `SEED` from the environment, if set.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("SEED must be a nonnegative integer, got '{s}'"))),
        Err(_) => Ok(None),
    }
}

/// Parses a snake_case enum name through its serde representation.
pub fn parse_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

/// Parses `a:b` in radians.
pub fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got '{s}'"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad interval start '{a}'"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad interval end '{b}'"))?;
    Ok((a, b))
}
