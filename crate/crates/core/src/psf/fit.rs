//! PSF models estimated from a bead image.
//!
//! The parametric models have intensity `A · exp(-½ q(x)^γ)` with
//! `q(x) = xᵀ Σ⁻¹ x`, centred on the image centre, `γ = 1` (Gaussian) or
//! `γ = 0.95` (fixed, not estimated). They are fitted by Poisson maximum
//! likelihood. For fixed `Σ` the amplitude maximiser is `Â = ΣZ / Σs`, so only
//! the covariance is searched, through its Cholesky factor
//! `(log l₁₁, l₂₁, log l₂₂)`, by Nelder–Mead.
//!
//! Coordinates are in pixels relative to the centre pixel.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::kernel::normalized_kernel;
use super::symmetrize::symmetrize;
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::image_model::anscombe;
use crate::symmetry::{estimate_axis_with, ContrastSpec, EstimateOptions};

/// Exponent of the misspecified power-Gaussian model.
pub const POWER_EXPONENT: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsfKind {
    GaussianMle,
    PowerGaussianMle,
    RawNonparametric,
    SymmetrizedNonparametric,
}

impl PsfKind {
    pub const ALL: [PsfKind; 4] = [
        PsfKind::GaussianMle,
        PsfKind::PowerGaussianMle,
        PsfKind::RawNonparametric,
        PsfKind::SymmetrizedNonparametric,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PsfKind::GaussianMle => "gaussian_mle",
            PsfKind::PowerGaussianMle => "power_gaussian_mle",
            PsfKind::RawNonparametric => "raw_nonparametric",
            PsfKind::SymmetrizedNonparametric => "symmetrized_nonparametric",
        }
    }

    fn exponent(&self) -> Option<f64> {
        match self {
            PsfKind::GaussianMle => Some(1.0),
            PsfKind::PowerGaussianMle => Some(POWER_EXPONENT),
            _ => None,
        }
    }
}

impl std::fmt::Display for PsfKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A PSF estimate with a unit-sum kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfModel {
    pub kind: PsfKind,
    pub kernel: ImageGrid,
    /// Parametric kinds: `[Σ₁₁, Σ₁₂, Σ₂₂, A]` in pixel units. Symmetrised: `[β̂]`.
    pub params: Option<Vec<f64>>,
}

impl PsfModel {
    pub fn from_kernel(kind: PsfKind, kernel: ImageGrid) -> Result<Self> {
        let kernel = normalized_kernel(kernel.into_values())?;
        Ok(Self {
            kind,
            kernel,
            params: None,
        })
    }
}

/// Unnormalised log-shape `-½ q^γ` at every pixel for Cholesky parameters.
fn log_shape(size: usize, theta: &[f64], gamma: f64) -> Array2<f64> {
    let (l11, l21, l22) = (theta[0].exp(), theta[1], theta[2].exp());
    let c = (size / 2) as f64;
    Array2::from_shape_fn((size, size), |(i, j)| {
        let x = i as f64 - c;
        let y = j as f64 - c;
        let w1 = x / l11;
        let w2 = (y - l21 * w1) / l22;
        let q = w1 * w1 + w2 * w2;
        -0.5 * q.powf(gamma)
    })
}

struct ProfiledPoisson<'a> {
    data: &'a Array2<f64>,
    total: f64,
    gamma: f64,
}

impl ProfiledPoisson<'_> {
    /// Negative profile log-likelihood, dropping the `log Z!` constant.
    fn evaluate(&self, theta: &[f64]) -> f64 {
        let ls = log_shape(self.data.nrows(), theta, self.gamma);
        let mut dot = 0.0;
        let mut mass = 0.0;
        for (&z, &l) in self.data.iter().zip(ls.iter()) {
            dot += z * l;
            mass += l.exp();
        }
        let amp = self.total / mass;
        -(dot + self.total * amp.ln() - self.total)
    }
}

impl CostFunction for ProfiledPoisson<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let v = self.evaluate(theta);
        // Keeps the simplex away from degenerate covariances.
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

/// Moment-matched Cholesky start; falls back to unit covariance.
fn moment_start(data: &Array2<f64>) -> Vec<f64> {
    let c = (data.nrows() / 2) as f64;
    let (mut s11, mut s12, mut s22, mut tot) = (0.0, 0.0, 0.0, 0.0);
    for ((i, j), &z) in data.indexed_iter() {
        let x = i as f64 - c;
        let y = j as f64 - c;
        s11 += z * x * x;
        s12 += z * x * y;
        s22 += z * y * y;
        tot += z;
    }
    if tot > 0.0 {
        let (s11, s12, s22) = (s11 / tot, s12 / tot, s22 / tot);
        if s11 > 0.0 && s11 * s22 - s12 * s12 > 0.0 {
            let l11 = s11.sqrt();
            let l21 = s12 / l11;
            let l22 = (s22 - l21 * l21).sqrt();
            return vec![l11.ln(), l21, l22.ln()];
        }
    }
    vec![0.0, 0.0, 0.0]
}

const MAX_SIMPLEX_ITERATIONS: u64 = 4000;
const RELATIVE_TOLERANCE: f64 = 1e-8;

fn nelder_mead(problem: &ProfiledPoisson<'_>, start: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let mut simplex = vec![start.clone()];
    for k in 0..start.len() {
        let mut v = start.clone();
        v[k] += 0.1;
        simplex.push(v);
    }
    let scale = problem.evaluate(&start).abs().max(1.0);
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(RELATIVE_TOLERANCE * scale)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let res = Executor::new(ProfiledPoisson { ..*problem }, solver)
        .configure(|s| s.max_iters(MAX_SIMPLEX_ITERATIONS))
        .run()
        .map_err(|e| Error::InvalidArgument(format!("simplex search failed: {e}")))?;
    let state = res.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::InvalidArgument("simplex search returned no point".into()))?;
    let cost = state.get_best_cost();
    match state.get_termination_status() {
        TerminationStatus::Terminated(TerminationReason::SolverConverged) => Ok((best, cost)),
        _ => Err(Error::NoConvergence {
            iterations: state.get_iter() as usize,
            spread: f64::NAN,
            best: cost,
        }),
    }
}

/// Poisson maximum-likelihood fit of a centred (power-)Gaussian to `data`.
pub fn fit_parametric_psf(data: &ImageGrid, kind: PsfKind) -> Result<PsfModel> {
    let gamma = kind
        .exponent()
        .ok_or_else(|| Error::InvalidArgument(format!("{kind} is not a parametric model")))?;
    let z = data.values();
    let (rows, cols) = z.dim();
    if rows != cols || rows % 2 == 0 {
        return Err(Error::DimensionMismatch(format!(
            "bead image must be square with odd size, got {rows}x{cols}"
        )));
    }
    if let Some(&v) = z.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "bead counts must be nonnegative, found {v}"
        )));
    }
    let total = z.sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("bead image has no counts".into()));
    }
    let problem = ProfiledPoisson { data: z, total, gamma };
    // A restart from the first optimum guards against a collapsed simplex.
    let (theta, _) = nelder_mead(&problem, moment_start(z))?;
    let (theta, _) = nelder_mead(&problem, theta)?;

    let shape = log_shape(rows, &theta, gamma).mapv(f64::exp);
    let amp = total / shape.sum();
    let (l11, l21, l22) = (theta[0].exp(), theta[1], theta[2].exp());
    let params = vec![l11 * l11, l11 * l21, l21 * l21 + l22 * l22, amp];
    Ok(PsfModel {
        kind,
        kernel: normalized_kernel(shape)?,
        params: Some(params),
    })
}

/// The raw bead counts as a kernel.
pub fn raw_psf(data: &ImageGrid) -> Result<PsfModel> {
    PsfModel::from_kernel(PsfKind::RawNonparametric, data.clone())
}

/// Settings for the symmetrised estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetrizeOptions {
    pub n_max: u32,
    /// Search range for the first axis; the second is orthogonal to it.
    pub interval: (f64, f64),
    /// Estimate the axis on Anscombe-transformed counts.
    pub anscombe: bool,
}

impl Default for SymmetrizeOptions {
    fn default() -> Self {
        use std::f64::consts::FRAC_PI_4;
        Self {
            n_max: 4,
            interval: (FRAC_PI_4, 3.0 * FRAC_PI_4),
            anscombe: true,
        }
    }
}

/// Estimates the symmetry axis of the bead image and averages the raw
/// counts over the two orthogonal axes it defines.
pub fn symmetrized_psf(data: &ImageGrid, options: &SymmetrizeOptions) -> Result<PsfModel> {
    let spec = ContrastSpec::full(options.n_max).with_interval(options.interval.0, options.interval.1)?;
    let source = if options.anscombe {
        anscombe(data)?
    } else {
        data.clone()
    };
    let est = estimate_axis_with(&source, &spec, 0.05, &EstimateOptions::default())?;
    let averaged = symmetrize(data, est.beta_hat)?;
    let mut model = PsfModel::from_kernel(PsfKind::SymmetrizedNonparametric, averaged)?;
    model.params = Some(vec![est.beta_hat]);
    Ok(model)
}

/// Builds the PSF estimate of the requested kind from a bead image.
pub fn estimate_psf(data: &ImageGrid, kind: PsfKind, options: &SymmetrizeOptions) -> Result<PsfModel> {
    match kind {
        PsfKind::GaussianMle | PsfKind::PowerGaussianMle => fit_parametric_psf(data, kind),
        PsfKind::RawNonparametric => raw_psf(data),
        PsfKind::SymmetrizedNonparametric => symmetrized_psf(data, options),
    }
}

/// Poisson log-likelihood `Σ Z log μ - μ` (without `log Z!`) of `data` under
/// intensity `μ = ΣZ · kernel`, i.e. with the amplitude at its maximiser.
pub fn profile_log_likelihood(data: &ImageGrid, kernel: &ImageGrid) -> Result<f64> {
    if data.values().dim() != kernel.values().dim() {
        return Err(Error::DimensionMismatch("data and kernel sizes differ".into()));
    }
    let total = data.sum();
    let mut ll = 0.0;
    for (&z, &k) in data.values().iter().zip(kernel.values()) {
        let mu = total * k;
        if z > 0.0 {
            ll += z * mu.ln();
        }
        ll -= mu;
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::kernel::{bead_intensity, gaussian_psf, simulate_bead_image, BeadSpec};

    fn power_image(size: usize, s11: f64, s22: f64, gamma: f64, amp: f64) -> ImageGrid {
        let c = (size / 2) as f64;
        ImageGrid::from_values(Array2::from_shape_fn((size, size), |(i, j)| {
            let (x, y) = (i as f64 - c, j as f64 - c);
            amp * (-0.5 * (x * x / s11 + y * y / s22).powf(gamma)).exp()
        }))
        .unwrap()
    }

    #[test]
    fn gaussian_fit_recovers_noise_free_widths() {
        let spec = BeadSpec::default();
        let data = bead_intensity(&spec, &spec.true_psf().unwrap()).unwrap();
        let model = fit_parametric_psf(&data, PsfKind::GaussianMle).unwrap();
        let p = model.params.unwrap();
        let sx = crate::psf::fwhm_to_sigma(spec.fwhm_x) / spec.pixel_size;
        let sy = crate::psf::fwhm_to_sigma(spec.fwhm_y) / spec.pixel_size;
        assert!((p[0].sqrt() / sx - 1.0).abs() < 0.01, "{} vs {sx}", p[0].sqrt());
        assert!((p[2].sqrt() / sy - 1.0).abs() < 0.01, "{} vs {sy}", p[2].sqrt());
        assert!(p[1].abs() < 0.01);
        assert!((model.kernel.sum() - 1.0).abs() < 1e-12);
        let truth = gaussian_psf(13, 64.0, spec.fwhm_x, spec.fwhm_y, 0.0).unwrap();
        for (a, b) in model.kernel.values().iter().zip(truth.values()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn misspecified_model_fits_worse() {
        let data = power_image(13, 2.0, 3.5, POWER_EXPONENT, 400.0).map(f64::round);
        let g = fit_parametric_psf(&data, PsfKind::GaussianMle).unwrap();
        let pg = fit_parametric_psf(&data, PsfKind::PowerGaussianMle).unwrap();
        let ll_g = profile_log_likelihood(&data, &g.kernel).unwrap();
        let ll_pg = profile_log_likelihood(&data, &pg.kernel).unwrap();
        assert!(ll_pg > ll_g, "{ll_pg} <= {ll_g}");
    }

    #[test]
    fn fits_noisy_beads() {
        let spec = BeadSpec::default();
        let psf = spec.true_psf().unwrap();
        for seed in 0..5 {
            let data = simulate_bead_image(&spec, &psf, seed).unwrap();
            for kind in PsfKind::ALL {
                let m = estimate_psf(&data, kind, &SymmetrizeOptions::default()).unwrap();
                assert_eq!(m.kind, kind);
                assert!((m.kernel.sum() - 1.0).abs() < 1e-12);
                assert!(m.kernel.values().iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn symmetrized_axis_is_near_vertical() {
        let spec = BeadSpec {
            peak_intensity: 400.0,
            ..BeadSpec::default()
        };
        let psf = spec.true_psf().unwrap();
        let data = simulate_bead_image(&spec, &psf, 11).unwrap();
        let m = symmetrized_psf(&data, &SymmetrizeOptions::default()).unwrap();
        let beta = m.params.unwrap()[0];
        assert!((beta - std::f64::consts::FRAC_PI_2).abs() < 0.1, "{beta}");
    }

    #[test]
    fn rejects_nonparametric_kind_and_empty_data() {
        let data = ImageGrid::zeros(5).unwrap();
        assert!(fit_parametric_psf(&data, PsfKind::RawNonparametric).is_err());
        assert!(fit_parametric_psf(&data, PsfKind::GaussianMle).is_err());
    }
}
