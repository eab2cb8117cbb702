//! Monte Carlo drivers: the sampling distribution of `β̂`, interval
//! coverage, and the PSF deconvolution benchmark.
//!
//! Replicate `i` uses seed `base_seed + i`. Results are gathered in replicate
//! order, so reports do not depend on whether replicates ran in parallel.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::image_model::{add_noise, add_noise_with, eval_target, noise_rng, NoiseSpec, TargetId, TargetSpec};
use crate::psf::{
    bead_intensity, estimate_psf, richardson_lucy_with, scaled_phantom, simulate_bead_image, BeadSpec, BestIterate,
    DistanceMetric, PsfKind, SymmetrizeOptions,
};
use crate::symmetry::{
    asymptotic_sd, contrast_curve, minimize_contrast, AxisEstimator, ContrastFunction, ContrastSpec, EstimateOptions,
    QuantileConvention,
};
use crate::zernike::{estimate_moments, MomentSet, WeightScheme};

/// Grid size for the "exact" moments behind the asymptotic overlay.
pub const EXACT_MOMENT_GRID: usize = 1001;

fn run_replicates<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Setup shared by the distribution and coverage studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AxisStudyConfig {
    pub target: TargetId,
    pub m: usize,
    /// Peak of the noise-free image over the noise standard deviation.
    pub snr: f64,
    pub sigma: f64,
    pub n_max: u32,
    pub replicates: usize,
    pub alpha: f64,
    pub base_seed: u64,
    pub scheme: WeightScheme,
    pub quantile: QuantileConvention,
}

impl Default for AxisStudyConfig {
    fn default() -> Self {
        Self {
            target: TargetId::F1,
            m: 51,
            snr: 5.0,
            sigma: 1.0,
            n_max: 7,
            replicates: 500,
            alpha: 0.05,
            base_seed: 0,
            scheme: WeightScheme::Midpoint,
            quantile: QuantileConvention::TwoSided,
        }
    }
}

impl AxisStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.m < 3 {
            return Err(Error::InvalidArgument(format!("grid size {} is too small", self.m)));
        }
        if !(self.snr > 0.0 && self.sigma > 0.0) {
            return Err(Error::InvalidArgument("snr and sigma must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// The noise-free image scaled to the configured SNR, and the scale factor.
    pub fn clean_image(&self) -> Result<(ImageGrid, f64)> {
        let img = eval_target(&TargetSpec::standard(self.target), self.m)?;
        let peak = img.peak();
        if !(peak > 0.0) {
            return Err(Error::InvalidArgument("target has no positive peak".into()));
        }
        let scale = self.snr * self.sigma / peak;
        Ok((img.scaled(scale), scale))
    }

    fn estimator(&self) -> Result<AxisEstimator> {
        let options = EstimateOptions {
            scheme: self.scheme,
            quantile: self.quantile,
            ..EstimateOptions::default()
        };
        AxisEstimator::new(self.m, ContrastSpec::full(self.n_max), self.alpha, options)
    }
}

/// Moments of the normalised target from a fine midpoint grid.
pub fn exact_moments(target: TargetId, n_max: u32) -> Result<MomentSet> {
    let grid = eval_target(&TargetSpec::standard(target), EXACT_MOMENT_GRID)?;
    estimate_moments(&grid, n_max, WeightScheme::Midpoint)
}

/// The theoretical quantities the Monte Carlo samples are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticLaw {
    /// `β*` for symmetric targets, otherwise the truncated-contrast minimiser.
    pub center: f64,
    pub symmetric: bool,
    /// `M_N''(center)` for the SNR-scaled target.
    pub curvature: f64,
    /// `√(8σ²Δ²/M_N'')`.
    pub sd: f64,
}

pub fn asymptotic_law(config: &AxisStudyConfig, scale: f64) -> Result<AsymptoticLaw> {
    let ms = exact_moments(config.target, config.n_max)?.scaled(scale);
    let (center, symmetric) = match config.target.beta_star() {
        Some(b) => (b, true),
        None => (minimize_contrast(&ms, &ContrastSpec::full(config.n_max))?, false),
    };
    let curvature = ContrastFunction::new(&ms).second_derivative(center);
    let delta = 2.0 / config.m as f64;
    Ok(AsymptoticLaw {
        center,
        symmetric,
        curvature,
        sd: asymptotic_sd(config.sigma, delta, curvature),
    })
}

/// Maps `beta` to the representative of `beta + πℤ` nearest `center`.
pub fn unwrap_near(beta: f64, center: f64) -> f64 {
    center + (beta - center + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Gaussian kernel density estimate with Silverman's bandwidth, on `points`
/// equispaced abscissae spanning the samples ± 3 bandwidths.
pub fn kernel_density(samples: &[f64], points: usize) -> Vec<(f64, f64)> {
    if samples.is_empty() || points == 0 {
        return Vec::new();
    }
    let (_, sd) = mean_sd(samples);
    let n = samples.len() as f64;
    let h = (1.06 * sd * n.powf(-0.2)).max(1e-12);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (n * h * (2.0 * PI).sqrt());
    (0..points)
        .map(|k| {
            let x = if points == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (points - 1) as f64
            };
            let d: f64 = samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaDistributionReport {
    pub config: AxisStudyConfig,
    pub law: AsymptoticLaw,
    /// `β̂` in `[0, π)`, by replicate.
    pub beta_hat: Vec<f64>,
    /// `β̂` unwrapped to within `π/2` of the law's centre.
    pub samples: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// `sd / law.sd`.
    pub sd_ratio: f64,
    /// Noise-free contrast `M_N(β)` of the scaled target on the study grid.
    pub contrast_curve: Vec<(f64, f64)>,
}

/// Replicates `estimate_axis` on freshly noised images of a target.
pub fn run_beta_distribution(config: &AxisStudyConfig) -> Result<BetaDistributionReport> {
    config.validate()?;
    let (clean, scale) = config.clean_image()?;
    let law = asymptotic_law(config, scale)?;
    let estimator = config.estimator()?;
    let results = run_replicates(config.replicates, |i| {
        let noisy = add_noise(
            &clean,
            &NoiseSpec::gaussian(config.sigma, config.base_seed.wrapping_add(i as u64)),
        )?;
        estimator.estimate(&noisy).map(|e| e.beta_hat)
    });
    let beta_hat = results.into_iter().collect::<Result<Vec<_>>>()?;
    let samples: Vec<f64> = beta_hat.iter().map(|&b| unwrap_near(b, law.center)).collect();
    let (mean, sd) = mean_sd(&samples);
    let curve = contrast_curve(&estimator.moments(&clean)?, 1024);
    Ok(BetaDistributionReport {
        config: *config,
        law,
        beta_hat,
        sd_ratio: sd / law.sd,
        samples,
        mean,
        sd,
        contrast_curve: curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: AxisStudyConfig,
    pub beta_star: f64,
    pub quantile: f64,
    pub covered: usize,
    pub coverage: f64,
    pub mean_half_width: f64,
}

/// Fraction of replicates whose interval covers the true axis.
pub fn run_ci_coverage(config: &AxisStudyConfig) -> Result<CoverageReport> {
    config.validate()?;
    let beta_star = config
        .target
        .beta_star()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no symmetry axis to cover", config.target)))?;
    let (clean, _) = config.clean_image()?;
    let estimator = config.estimator()?;
    let results = run_replicates(config.replicates, |i| {
        let noisy = add_noise(
            &clean,
            &NoiseSpec::gaussian(config.sigma, config.base_seed.wrapping_add(i as u64)),
        )?;
        estimator.estimate(&noisy)
    });
    let estimates = results.into_iter().collect::<Result<Vec<_>>>()?;
    let covered = estimates.iter().filter(|e| e.covers(beta_star)).count();
    let n = estimates.len() as f64;
    Ok(CoverageReport {
        config: *config,
        beta_star,
        quantile: estimates[0].quantile,
        covered,
        coverage: covered as f64 / n,
        mean_half_width: estimates.iter().map(|e| e.half_width()).sum::<f64>() / n,
    })
}

/// The two-step PSF benchmark: estimate the PSF from a bead, then deconvolve
/// a blurred phantom with each estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfBenchmarkConfig {
    pub bead: BeadSpec,
    /// Peak of the blurred phantom, in expected counts.
    pub phantom_peak: f64,
    pub max_iter: usize,
    pub replicates: usize,
    pub base_seed: u64,
    /// Truncation for the axis estimate of the symmetrised PSF.
    pub n_max: u32,
    pub interval: (f64, f64),
    pub anscombe: bool,
    /// `false` replaces every Poisson draw by its mean.
    pub noise: bool,
}

impl Default for PsfBenchmarkConfig {
    fn default() -> Self {
        Self {
            bead: BeadSpec::default(),
            phantom_peak: 400.0,
            max_iter: crate::psf::deconv::DEFAULT_ITERATIONS,
            replicates: 200,
            base_seed: 0,
            n_max: 4,
            interval: (FRAC_PI_4, 3.0 * FRAC_PI_4),
            anscombe: true,
            noise: true,
        }
    }
}

impl PsfBenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.bead.validate()?;
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if !(self.phantom_peak > 0.0) {
            return Err(Error::InvalidArgument("phantom peak must be positive".into()));
        }
        ContrastSpec::full(self.n_max).with_interval(self.interval.0, self.interval.1)?;
        Ok(())
    }

    fn symmetrize_options(&self) -> SymmetrizeOptions {
        SymmetrizeOptions {
            n_max: self.n_max,
            interval: self.interval,
            anscombe: self.anscombe,
        }
    }
}

/// One method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub method: PsfKind,
    pub l1: f64,
    pub l1_iteration: usize,
    pub l2: f64,
    pub l2_iteration: usize,
    pub log_likelihood_monotone: bool,
    pub min_value: f64,
    pub max_mass_drift: f64,
    /// Estimated first axis, for the symmetrised method.
    pub beta_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: PsfKind,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub sd_l1: f64,
    pub sd_l2: f64,
}

/// One-sided paired sign test that `better` has the smaller distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub better: PsfKind,
    pub worse: PsfKind,
    pub metric: DistanceMetric,
    pub wins: usize,
    /// Replicates without a tie.
    pub trials: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfBenchmarkReport {
    pub config: PsfBenchmarkConfig,
    /// Distances are pixel sums over the 128×128 image, in counts.
    pub methods: Vec<MethodSummary>,
    /// Methods sorted by mean L1, best first.
    pub ordering_l1: Vec<PsfKind>,
    pub ordering_l2: Vec<PsfKind>,
    pub sign_tests: Vec<SignTest>,
    pub records: Vec<ReplicateRecord>,
}

impl PsfBenchmarkReport {
    pub fn summary(&self, method: PsfKind) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn sign_test(&self, better: PsfKind, worse: PsfKind, metric: DistanceMetric) -> Option<&SignTest> {
        self.sign_tests
            .iter()
            .find(|t| t.better == better && t.worse == worse && t.metric == metric)
    }

    pub fn mean(&self, method: PsfKind, metric: DistanceMetric) -> Option<f64> {
        self.summary(method).map(|s| match metric {
            DistanceMetric::L1 => s.mean_l1,
            DistanceMetric::L2 => s.mean_l2,
        })
    }
}

/// Exact one-sided sign-test p-value `P(Bin(n, ½) ≥ wins)`.
pub fn sign_test_p_value(wins: usize, trials: usize) -> f64 {
    if wins == 0 || trials == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, trials as u64).expect("valid binomial");
    // Survival function: `1 - cdf` cancels to zero for large win counts.
    b.sf(wins as u64 - 1)
}

/// Runs all four PSF estimates for one replicate.
pub fn run_psf_replicate(
    config: &PsfBenchmarkConfig,
    truth: &ImageGrid,
    blurred: &ImageGrid,
    replicate: usize,
) -> Result<Vec<ReplicateRecord>> {
    let seed = config.base_seed.wrapping_add(replicate as u64);
    let true_psf = config.bead.true_psf()?;
    let (bead, data) = if config.noise {
        (
            simulate_bead_image(&config.bead, &true_psf, seed)?,
            add_noise_with(blurred, &NoiseSpec::poisson(seed), &mut noise_rng(seed, 1))?,
        )
    } else {
        (bead_intensity(&config.bead, &true_psf)?, blurred.clone())
    };
    let options = config.symmetrize_options();
    PsfKind::ALL
        .iter()
        .map(|&kind| {
            let model = estimate_psf(&bead, kind, &options)?;
            let mut l1 = BestIterate::new(DistanceMetric::L1);
            let mut l2 = BestIterate::new(DistanceMetric::L2);
            let summary = richardson_lucy_with(&data, &model.kernel, config.max_iter, |it| {
                l1.observe(it.k, it.estimate, truth.values());
                l2.observe(it.k, it.estimate, truth.values());
            })?;
            let (l1_iteration, l1) = l1.best().expect("at least one iterate");
            let (l2_iteration, l2) = l2.best().expect("at least one iterate");
            Ok(ReplicateRecord {
                replicate,
                seed,
                method: kind,
                l1,
                l1_iteration,
                l2,
                l2_iteration,
                log_likelihood_monotone: summary.monotone,
                min_value: summary.min_value,
                max_mass_drift: summary.max_mass_drift(),
                beta_hat: match kind {
                    PsfKind::SymmetrizedNonparametric => model.params.as_ref().map(|p| p[0]),
                    _ => None,
                },
            })
        })
        .collect()
}

/// Table-1 style comparison of the four PSF estimates.
pub fn run_psf_benchmark(config: &PsfBenchmarkConfig) -> Result<PsfBenchmarkReport> {
    config.validate()?;
    let (truth, blurred) = scaled_phantom(&config.bead.true_psf()?, config.phantom_peak)?;
    let per_replicate = run_replicates(config.replicates, |i| run_psf_replicate(config, &truth, &blurred, i));
    let mut records = Vec::with_capacity(config.replicates * PsfKind::ALL.len());
    for r in per_replicate {
        records.extend(r?);
    }
    Ok(summarize_benchmark(*config, records))
}

fn summarize_benchmark(config: PsfBenchmarkConfig, records: Vec<ReplicateRecord>) -> PsfBenchmarkReport {
    let column = |kind: PsfKind, metric: DistanceMetric| -> Vec<f64> {
        records
            .iter()
            .filter(|r| r.method == kind)
            .map(|r| match metric {
                DistanceMetric::L1 => r.l1,
                DistanceMetric::L2 => r.l2,
            })
            .collect()
    };
    let methods: Vec<MethodSummary> = PsfKind::ALL
        .iter()
        .map(|&kind| {
            let (mean_l1, sd_l1) = mean_sd(&column(kind, DistanceMetric::L1));
            let (mean_l2, sd_l2) = mean_sd(&column(kind, DistanceMetric::L2));
            MethodSummary {
                method: kind,
                mean_l1,
                mean_l2,
                sd_l1,
                sd_l2,
            }
        })
        .collect();
    let order = |metric: DistanceMetric| {
        let mut v: Vec<(PsfKind, f64)> = methods
            .iter()
            .map(|s| {
                (
                    s.method,
                    match metric {
                        DistanceMetric::L1 => s.mean_l1,
                        DistanceMetric::L2 => s.mean_l2,
                    },
                )
            })
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        v.into_iter().map(|(k, _)| k).collect::<Vec<_>>()
    };
    let mut sign_tests = Vec::new();
    for metric in [DistanceMetric::L1, DistanceMetric::L2] {
        for (i, &better) in PsfKind::ALL.iter().enumerate() {
            for &worse in &PsfKind::ALL[i + 1..] {
                for (a, b) in [(better, worse), (worse, better)] {
                    let xa = column(a, metric);
                    let xb = column(b, metric);
                    let wins = xa.iter().zip(&xb).filter(|(x, y)| x < y).count();
                    let trials = xa.iter().zip(&xb).filter(|(x, y)| x != y).count();
                    sign_tests.push(SignTest {
                        better: a,
                        worse: b,
                        metric,
                        wins,
                        trials,
                        p_value: sign_test_p_value(wins, trials),
                    });
                }
            }
        }
    }
    PsfBenchmarkReport {
        config,
        ordering_l1: order(DistanceMetric::L1),
        ordering_l2: order(DistanceMetric::L2),
        methods,
        sign_tests,
        records,
    }
}
