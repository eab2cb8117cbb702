use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;
use symaxis::experiments::{
    kernel_density, run_beta_distribution, run_ci_coverage, run_psf_benchmark, BetaDistributionReport,
    PsfBenchmarkReport,
};
use symaxis::image_model::{add_noise, anscombe, eval_target, NoiseSpec, TargetSpec};
use symaxis::psf::deconv::distance;
use symaxis::psf::{normalized_kernel, richardson_lucy_with, simulate_bead_image, BeadSpec, DistanceMetric};
use symaxis::symmetry::{contrast_curve, estimate_axis_with, estimate_noise_variance, EstimateOptions};
use symaxis::{estimate_moments, ContrastSpec, ImageGrid, SymmetryEstimate};

use crate::config::{self, EstimateConfig, ExperimentConfig};
use crate::error::CliError;
use crate::io::{fmt_f64, read_image, write_image, write_json, write_table};
use crate::{DeconvolveArgs, EstimateArgs, ExperimentArgs, GenerateArgs, GenerateTarget, SymmetrizeArgs};

/// Points on the written contrast curves.
const CURVE_POINTS: usize = 1024;
/// Abscissae of the written kernel density estimate.
const DENSITY_POINTS: usize = 512;

#[derive(Debug, Serialize)]
struct AxisReport {
    beta_hat: f64,
    beta_hat_deg: f64,
    ci: (f64, f64),
    ci_deg: (f64, f64),
    half_width: f64,
    sigma2_hat: f64,
    contrast_min: f64,
    curvature: f64,
    gcd_diagnostic: u32,
    n_max: u32,
    interval: (f64, f64),
    alpha: f64,
    quantile: f64,
    anscombe: bool,
}

impl AxisReport {
    fn new(e: &SymmetryEstimate, anscombe: bool) -> Self {
        Self {
            beta_hat: e.beta_hat,
            beta_hat_deg: e.beta_hat.to_degrees(),
            ci: (e.ci_low, e.ci_high),
            ci_deg: (e.ci_low.to_degrees(), e.ci_high.to_degrees()),
            half_width: e.half_width(),
            sigma2_hat: e.sigma2_hat,
            contrast_min: e.contrast_min,
            curvature: e.curvature,
            gcd_diagnostic: e.gcd_diagnostic,
            n_max: e.n_max,
            interval: e.interval,
            alpha: e.alpha,
            quantile: e.quantile,
            anscombe,
        }
    }
}

fn print_or_write<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).expect("report is serialisable");
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Data(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

/// Estimates the axis of `grid`, returning the estimate and the image the
/// moments were taken from.
fn run_estimate(grid: &ImageGrid, cfg: &EstimateConfig) -> Result<(SymmetryEstimate, ImageGrid), CliError> {
    cfg.validate()?;
    let image = if cfg.anscombe { anscombe(grid)? } else { grid.clone() };
    let spec = ContrastSpec::full(cfg.n_max)
        .with_interval(cfg.interval.0, cfg.interval.1)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let options = EstimateOptions {
        scheme: cfg.scheme,
        quantile: cfg.quantile,
        curvature: cfg.curvature,
        ..EstimateOptions::default()
    };
    Ok((estimate_axis_with(&image, &spec, cfg.alpha, &options)?, image))
}

pub fn estimate_axis(args: &EstimateArgs) -> Result<(), CliError> {
    let mut cfg: EstimateConfig = match &args.config {
        Some(p) => config::load(p)?,
        None => EstimateConfig::default(),
    };
    if let Some(n) = args.n_max {
        cfg.n_max = n;
    }
    if let Some(i) = args.interval {
        cfg.interval = i;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(s) = args.scheme {
        cfg.scheme = s;
    }
    if let Some(q) = args.quantile {
        cfg.quantile = q;
    }
    if let Some(c) = args.curvature {
        cfg.curvature = c;
    }
    cfg.anscombe |= args.anscombe;

    let grid = read_image(&args.input)?;
    let (est, image) = run_estimate(&grid, &cfg)?;
    if let Some(path) = &args.curve {
        let ms = estimate_moments(&image, cfg.n_max, cfg.scheme)?;
        let rows = contrast_curve(&ms, CURVE_POINTS)
            .into_iter()
            .map(|(b, v)| vec![fmt_f64(b), fmt_f64(v)]);
        write_table(path, &["beta", "contrast"], rows)?;
    }
    print_or_write(&AxisReport::new(&est, cfg.anscombe), args.output.as_deref())
}

pub fn symmetrize(args: &SymmetrizeArgs) -> Result<(), CliError> {
    let grid = read_image(&args.input)?;
    let beta = match args.beta {
        Some(b) => b,
        None => {
            let mut cfg = EstimateConfig::default();
            if let Some(n) = args.n_max {
                cfg.n_max = n;
            }
            if let Some(i) = args.interval {
                cfg.interval = i;
            }
            cfg.anscombe = args.anscombe;
            let (est, _) = run_estimate(&grid, &cfg)?;
            eprintln!(
                "estimated axis: {} rad ({} deg), CI [{}, {}]",
                est.beta_hat,
                est.beta_hat.to_degrees(),
                est.ci_low,
                est.ci_high
            );
            est.beta_hat
        }
    };
    let out = symaxis::psf::symmetrize(&grid, beta)?;
    write_image(&args.output, &out)?;
    match (estimate_noise_variance(&grid), estimate_noise_variance(&out)) {
        (Ok(before), Ok(after)) => eprintln!(
            "beta = {beta}; pixel noise variance estimate {before:.6e} -> {after:.6e} (ratio {:.4})",
            after / before
        ),
        _ => eprintln!("beta = {beta}; image too small for a noise variance estimate"),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BestReport {
    iteration: usize,
    distance: f64,
}

#[derive(Debug, Serialize)]
struct DeconvolveReport {
    iterations: usize,
    final_log_likelihood: f64,
    log_likelihood_monotone: bool,
    max_mass_drift: f64,
    min_value: f64,
    /// Iterate written to the output file.
    written_iteration: usize,
    best_l1: Option<BestReport>,
    best_l2: Option<BestReport>,
}

pub fn deconvolve(args: &DeconvolveArgs) -> Result<(), CliError> {
    let data = read_image(&args.data)?;
    let kernel = normalized_kernel(read_image(&args.psf)?.into_values())?;
    let truth = args.truth.as_deref().map(read_image).transpose()?;
    if let Some(t) = &truth {
        if t.m() != data.m() {
            return Err(CliError::Data(format!(
                "truth is {0}x{0} but data is {1}x{1}",
                t.m(),
                data.m()
            )));
        }
    }
    let mut last: Option<Array2<f64>> = None;
    let mut best: [Option<(usize, f64)>; 2] = [None, None];
    let mut chosen: Option<(usize, Array2<f64>)> = None;
    let metrics = [DistanceMetric::L1, DistanceMetric::L2];
    let summary = richardson_lucy_with(&data, &kernel, args.iters, |it| {
        if let Some(t) = &truth {
            for (slot, metric) in best.iter_mut().zip(metrics) {
                let d = distance(it.estimate, t.values(), metric);
                if slot.is_none_or(|(_, b)| d < b) {
                    *slot = Some((it.k, d));
                    if metric == args.metric {
                        chosen = Some((it.k, it.estimate.clone()));
                    }
                }
            }
        } else if it.k == args.iters {
            last = Some(it.estimate.clone());
        }
    })?;
    let (written_iteration, values) = match (chosen, last) {
        (Some(c), _) => c,
        (None, Some(l)) => (args.iters, l),
        (None, None) => unreachable!("the callback sees the final iterate"),
    };
    write_image(&args.output, &ImageGrid::from_values(values)?)?;
    let to_report = |b: Option<(usize, f64)>| b.map(|(iteration, distance)| BestReport { iteration, distance });
    let report = DeconvolveReport {
        iterations: summary.iterations,
        final_log_likelihood: *summary.log_likelihood.last().expect("at least the start"),
        log_likelihood_monotone: summary.monotone,
        max_mass_drift: summary.max_mass_drift(),
        min_value: summary.min_value,
        written_iteration,
        best_l1: to_report(best[0]),
        best_l2: to_report(best[1]),
    };
    print_or_write(&report, args.report.as_deref())
}

fn write_beta_outputs(dir: &Path, report: &BetaDistributionReport) -> Result<(), CliError> {
    let c = &report.config;
    let rows = report
        .beta_hat
        .iter()
        .zip(&report.samples)
        .enumerate()
        .map(|(i, (b, s))| {
            vec![
                i.to_string(),
                c.base_seed.wrapping_add(i as u64).to_string(),
                fmt_f64(*b),
                fmt_f64(*s),
            ]
        });
    write_table(
        &dir.join("beta_samples.csv"),
        &["replicate", "seed", "beta_hat", "beta_unwrapped"],
        rows,
    )?;

    let law = report.law;
    let normal = |x: f64| {
        let z = (x - law.center) / law.sd;
        (-0.5 * z * z).exp() / (law.sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    let rows = kernel_density(&report.samples, DENSITY_POINTS)
        .into_iter()
        .map(|(x, d)| vec![fmt_f64(x), fmt_f64(d), fmt_f64(normal(x))]);
    write_table(
        &dir.join("beta_density.csv"),
        &["beta", "kde", "asymptotic_normal"],
        rows,
    )?;

    let rows = report.contrast_curve.iter().map(|&(b, v)| vec![fmt_f64(b), fmt_f64(v)]);
    write_table(&dir.join("contrast_curve.csv"), &["beta", "contrast"], rows)
}

fn write_benchmark_outputs(dir: &Path, report: &PsfBenchmarkReport) -> Result<(), CliError> {
    let rows = report.records.iter().map(|r| {
        vec![
            r.replicate.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            fmt_f64(r.l1),
            r.l1_iteration.to_string(),
            fmt_f64(r.l2),
            r.l2_iteration.to_string(),
            r.beta_hat.map(fmt_f64).unwrap_or_default(),
            r.log_likelihood_monotone.to_string(),
        ]
    });
    write_table(
        &dir.join("psf_distances.csv"),
        &[
            "replicate",
            "seed",
            "method",
            "l1",
            "l1_iteration",
            "l2",
            "l2_iteration",
            "beta_hat",
            "ll_monotone",
        ],
        rows,
    )?;
    let rows = report.methods.iter().map(|m| {
        vec![
            m.method.to_string(),
            fmt_f64(m.mean_l1),
            fmt_f64(m.sd_l1),
            fmt_f64(m.mean_l2),
            fmt_f64(m.sd_l2),
        ]
    });
    write_table(
        &dir.join("psf_summary.csv"),
        &["method", "mean_l1", "sd_l1", "mean_l2", "sd_l2"],
        rows,
    )
}

pub fn experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = config::load(&args.config)?;
    if let Some(seed) = config::env_seed()? {
        cfg.set_seed(seed);
    }
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = args.replicates {
        cfg.set_replicates(n);
    }
    cfg.validate()?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let report_path = args.out_dir.join(format!("{}.json", cfg.name()));
    match cfg {
        ExperimentConfig::BetaDistribution(c) => {
            let report = run_beta_distribution(&c)?;
            write_json(&report_path, &report)?;
            write_beta_outputs(&args.out_dir, &report)?;
            eprintln!(
                "{} replicates: mean {:.6}, sd {:.6e}, asymptotic sd {:.6e} (ratio {:.4})",
                c.replicates, report.mean, report.sd, report.law.sd, report.sd_ratio
            );
        }
        ExperimentConfig::CiCoverage(c) => {
            let report = run_ci_coverage(&c)?;
            write_json(&report_path, &report)?;
            eprintln!(
                "coverage {}/{} = {:.4} (nominal {:.4})",
                report.covered,
                c.replicates,
                report.coverage,
                1.0 - c.alpha
            );
        }
        ExperimentConfig::PsfBenchmark(c) => {
            let report = run_psf_benchmark(&c)?;
            write_json(&report_path, &report)?;
            write_benchmark_outputs(&args.out_dir, &report)?;
            for m in &report.methods {
                eprintln!("{:<26} L1 {:.6e}  L2 {:.6e}", m.method, m.mean_l1, m.mean_l2);
            }
        }
    }
    eprintln!("wrote {}", report_path.display());
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let image = match args.parsed_target()? {
        GenerateTarget::Bead => {
            let spec = BeadSpec::default();
            let psf = spec.true_psf()?;
            if args.clean {
                symaxis::psf::bead_intensity(&spec, &psf)?
            } else {
                simulate_bead_image(&spec, &psf, args.seed)?
            }
        }
        GenerateTarget::Disc(id) => {
            if !(args.snr > 0.0 && args.sigma > 0.0) {
                return Err(CliError::Usage("snr and sigma must be positive".into()));
            }
            let clean = eval_target(&TargetSpec::standard(id), args.m)?;
            let clean = symaxis::image_model::snr_scale(&clean, args.snr, args.sigma)?;
            if args.clean {
                clean
            } else {
                add_noise(&clean, &NoiseSpec::gaussian(args.sigma, args.seed))?
            }
        }
    };
    write_image(&args.output, &image)
}
