//! Reflection-axis estimation by minimising the empirical contrast
//!
//! ```text
//! M̂_N(β) = Σ_{p≤N} n_p⁻¹ Σ_q |Â_pq − e^{−2iqβ} Â_{p,−q}|²
//! ```
//!
//! which is the squared L2 distance between the truncated Zernike estimate of
//! the image and its reflection across the line at angle `β`. For real images
//! this is a trigonometric polynomial in `β` of period `π`, and the estimator
//! `β̂` is its global minimiser. Asymptotically
//! `Δ⁻¹(β̂ − β*) → N(0, 8σ²/M_N''(β*))`, which gives the confidence interval.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::zernike::{admissible_indices, estimate_moments, reconstruct, MomentEstimator, MomentSet, WeightScheme};

/// Search setup for the contrast minimiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub n_max: u32,
    /// Half-open search interval `[a, b) ⊆ [0, π)`.
    pub interval: (f64, f64),
    pub grid_points: usize,
}

pub const DEFAULT_GRID_POINTS: usize = 4096;

impl ContrastSpec {
    pub fn new(n_max: u32, a: f64, b: f64, grid_points: usize) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= PI + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "search interval [{a}, {b}) must satisfy 0 <= a < b <= pi"
            )));
        }
        if grid_points == 0 {
            return Err(Error::InvalidArgument("grid_points must be positive".into()));
        }
        Ok(Self {
            n_max,
            interval: (a, b.min(PI)),
            grid_points,
        })
    }

    /// Search over all of `[0, π)` with the default scan resolution.
    pub fn full(n_max: u32) -> Self {
        Self {
            n_max,
            interval: (0.0, PI),
            grid_points: DEFAULT_GRID_POINTS,
        }
    }

    pub fn with_interval(self, a: f64, b: f64) -> Result<Self> {
        Self::new(self.n_max, a, b, self.grid_points)
    }
}

/// Moments of the reflected image: `A_pq(τ_β f) = e^{−2iqβ} A_{p,−q}(f)`.
pub fn reflect_moments(ms: &MomentSet, beta: f64) -> MomentSet {
    let mut out = ms.clone();
    for (idx, _) in ms.iter() {
        let phase = Complex64::from_polar(1.0, -2.0 * idx.q() as f64 * beta);
        out.set(idx, phase * ms.get(idx.mirrored()));
    }
    out
}

/// `M̂_N(β)` evaluated from its definition as a sum of squared differences.
pub fn contrast(ms: &MomentSet, beta: f64) -> f64 {
    ms.iter()
        .map(|(idx, a)| {
            let phase = Complex64::from_polar(1.0, -2.0 * idx.q() as f64 * beta);
            (a - phase * ms.get(idx.mirrored())).norm_sqr() / idx.norm()
        })
        .sum()
}

/// `Σ_p n_p⁻¹ Σ_{q≥0} 4|Â_pq|²(1 − cos(2r̂_pq + 2qβ))`, the closed form for
/// conjugate-symmetric moment sets.
pub fn contrast_cosine_form(ms: &MomentSet, beta: f64) -> f64 {
    ms.iter()
        .filter(|(idx, _)| idx.q() >= 0)
        .map(|(idx, a)| {
            let r = a.arg();
            4.0 * a.norm_sqr() * (1.0 - (2.0 * r + 2.0 * idx.q() as f64 * beta).cos()) / idx.norm()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TrigTerm {
    q: u32,
    amplitude: f64,
    phase: f64,
}

/// `M̂_N` as `c − Σ w_k cos(2q_k β − φ_k)` with analytic derivatives.
///
/// Each pair `(q, −q)` with `a = Â_pq`, `b = Â_{p,−q}` contributes
/// `n_p⁻¹ [2(|a|² + |b|²) − 4|āb| cos(2qβ − arg(āb))]`; for real images
/// `b = ā` and this reduces to the cosine form.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastFunction {
    constant: f64,
    terms: Vec<TrigTerm>,
}

impl ContrastFunction {
    pub fn new(ms: &MomentSet) -> Self {
        let mut constant = 0.0;
        let mut terms = Vec::new();
        for (idx, a) in ms.iter().filter(|(idx, _)| idx.q() > 0) {
            let b = ms.get(idx.mirrored());
            let n_p = idx.norm();
            constant += 2.0 * (a.norm_sqr() + b.norm_sqr()) / n_p;
            let prod = a.conj() * b;
            let amplitude = 4.0 * prod.norm() / n_p;
            if amplitude > 0.0 {
                terms.push(TrigTerm {
                    q: idx.q() as u32,
                    amplitude,
                    phase: prod.arg(),
                });
            }
        }
        Self { constant, terms }
    }

    pub fn value(&self, beta: f64) -> f64 {
        let v: f64 = self.constant
            - self
                .terms
                .iter()
                .map(|t| t.amplitude * (2.0 * t.q as f64 * beta - t.phase).cos())
                .sum::<f64>();
        v.max(0.0)
    }

    pub fn derivative(&self, beta: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let w = 2.0 * t.q as f64;
                t.amplitude * w * (w * beta - t.phase).sin()
            })
            .sum()
    }

    pub fn second_derivative(&self, beta: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let w = 2.0 * t.q as f64;
                t.amplitude * w * w * (w * beta - t.phase).cos()
            })
            .sum()
    }

    /// Curvature at a zero of the contrast: `Σ n_p⁻¹ 16 q² |Â_pq|²` for real images.
    pub fn plug_in_curvature(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| 4.0 * (t.q as f64).powi(2) * t.amplitude)
            .sum()
    }

    /// Greatest common divisor of the angular frequencies present.
    pub fn frequency_gcd(&self) -> u32 {
        self.terms.iter().fold(0, |g, t| gcd(g, t.q))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }
}

/// `M̂_N''(β) = Σ_p n_p⁻¹ Σ_{q≥0} 16 q² |Â_pq|² cos(2r̂_pq + 2qβ)`.
pub fn contrast_curvature(ms: &MomentSet, beta: f64) -> f64 {
    ContrastFunction::new(ms).second_derivative(beta)
}

/// `Σ_p n_p⁻¹ Σ_{q≥0} 16 q² |Â_pq|²`, the curvature at an exact zero.
pub fn plug_in_curvature(ms: &MomentSet) -> f64 {
    ContrastFunction::new(ms).plug_in_curvature()
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Safeguarded Newton on `M'` inside `[lo, hi]`, started at `x`.
fn refine_minimum(f: &ContrastFunction, mut x: f64, mut lo: f64, mut hi: f64) -> f64 {
    let g_lo = f.derivative(lo);
    let g_hi = f.derivative(hi);
    if !(g_lo <= 0.0 && g_hi >= 0.0) {
        // No stationary point is bracketed; the minimum sits at a bracket end.
        return [lo, x, hi]
            .into_iter()
            .min_by(|a, b| f.value(*a).total_cmp(&f.value(*b)))
            .unwrap();
    }
    let mut dx_old = hi - lo;
    for _ in 0..50 {
        let g = f.derivative(x);
        if g == 0.0 {
            break;
        }
        let h = f.second_derivative(x);
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - g / h;
        let dx;
        if h <= 0.0 || !(lo < newton && newton < hi) || (2.0 * g).abs() > (dx_old * h).abs() {
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        } else {
            dx = g / h;
            x = newton;
        }
        dx_old = dx;
        if dx.abs() < 1e-12 {
            break;
        }
    }
    x
}

/// Global minimiser of `M̂_N` over `spec.interval`: a coarse scan over
/// `spec.grid_points` equispaced angles (ties to the smallest angle) followed by
/// safeguarded Newton refinement to `|Δβ| < 1e−12`.
pub fn minimize_contrast(ms: &MomentSet, spec: &ContrastSpec) -> Result<f64> {
    let ms = if ms.n_max() > spec.n_max {
        ms.truncated(spec.n_max)
    } else {
        ms.clone()
    };
    if ms.is_zero() {
        return Err(Error::DegenerateContrast);
    }
    let f = ContrastFunction::new(&ms);
    Ok(minimize_function(&f, spec))
}

fn minimize_function(f: &ContrastFunction, spec: &ContrastSpec) -> f64 {
    let (a, b) = spec.interval;
    let n = spec.grid_points;
    let h = (b - a) / n as f64;
    let mut best = (a, f.value(a));
    for k in 1..n {
        let beta = a + k as f64 * h;
        let v = f.value(beta);
        if v < best.1 {
            best = (beta, v);
        }
    }
    if f.is_constant() {
        return a;
    }
    let period = PI / f.frequency_gcd() as f64;
    let periods = (b - a) / period;
    let circular = periods.round() >= 1.0 && (periods - periods.round()).abs() < 1e-9;
    let (mut lo, mut hi) = (best.0 - h, best.0 + h);
    if !circular {
        lo = lo.max(a);
        hi = hi.min(b);
    }
    let beta = refine_minimum(f, best.0, lo, hi);
    if circular {
        a + (beta - a).rem_euclid(b - a)
    } else {
        beta.clamp(a, b)
    }
}

/// Local minima of `M̂_N` on `[0, π)` (treated as a circle), refined by Newton.
pub fn contrast_local_minima(ms: &MomentSet, grid_points: usize) -> Vec<(f64, f64)> {
    let f = ContrastFunction::new(ms);
    let h = PI / grid_points as f64;
    let values: Vec<f64> = (0..grid_points).map(|k| f.value(k as f64 * h)).collect();
    let mut out = Vec::new();
    for k in 0..grid_points {
        let prev = values[(k + grid_points - 1) % grid_points];
        let next = values[(k + 1) % grid_points];
        if values[k] < prev && values[k] <= next {
            let beta0 = k as f64 * h;
            let beta = refine_minimum(&f, beta0, beta0 - h, beta0 + h).rem_euclid(PI);
            out.push((beta, f.value(beta)));
        }
    }
    out
}

/// Sampled contrast curve `(β, M̂_N(β))` at `points` equispaced angles in `[0, π)`.
pub fn contrast_curve(ms: &MomentSet, points: usize) -> Vec<(f64, f64)> {
    let f = ContrastFunction::new(ms);
    (0..points)
        .map(|k| {
            let beta = PI * k as f64 / points as f64;
            (beta, f.value(beta))
        })
        .collect()
}

/// Relative size below which a moment counts as rounding noise.
const ROUNDOFF_FLOOR: f64 = 1e-10;

/// Default threshold for [`gcd_identifiability`]: half the median `|Â_pq|`
/// over `q > 0`, but never below rounding level relative to the largest moment.
pub fn default_gcd_threshold(ms: &MomentSet) -> f64 {
    let largest = ms.iter().map(|(_, a)| a.norm()).fold(0.0, f64::max);
    let floor = ROUNDOFF_FLOOR * largest;
    let mut mags: Vec<f64> = ms
        .iter()
        .filter(|(idx, _)| idx.q() > 0)
        .map(|(_, a)| a.norm())
        .collect();
    if mags.is_empty() {
        return floor;
    }
    mags.sort_by(f64::total_cmp);
    let n = mags.len();
    let median = if n % 2 == 1 {
        mags[n / 2]
    } else {
        0.5 * (mags[n / 2 - 1] + mags[n / 2])
    };
    (0.5 * median).max(floor)
}

/// gcd of the angular frequencies `q > 0` whose moments exceed `threshold`
/// in modulus. A value of 1 means the axis is unique on `[0, π)`; a value
/// `g > 1` means the contrast has period `π/g` and the search should be
/// restricted to `[0, π/g)`.
pub fn gcd_identifiability(ms: &MomentSet, threshold: f64) -> Result<u32> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let g = ms
        .iter()
        .filter(|(idx, a)| idx.q() > 0 && a.norm() > threshold)
        .fold(0, |g, (idx, _)| gcd(g, idx.q() as u32));
    if g == 0 {
        Err(Error::NoAngularInformation { threshold })
    } else {
        Ok(g)
    }
}

/// Difference-based noise variance
/// `σ̂² = C⁻¹ Σ ¼((Z_ij − Z_{i+1,j})² + (Z_ij − Z_{i,j+1})²)`, summed over
/// in-disc pixels whose right and upper neighbours are also in the disc.
pub fn estimate_noise_variance(grid: &ImageGrid) -> Result<f64> {
    let m = grid.m();
    let z = grid.values();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..m.saturating_sub(1) {
        for j in 0..m - 1 {
            if grid.is_inside(i, j) && grid.is_inside(i + 1, j) && grid.is_inside(i, j + 1) {
                let dx = z[[i, j]] - z[[i + 1, j]];
                let dy = z[[i, j]] - z[[i, j + 1]];
                sum += 0.25 * (dx * dx + dy * dy);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyDifferenceSum);
    }
    Ok(sum / count as f64)
}

/// How the nominal level `α` maps to the normal quantile in the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuantileConvention {
    /// `z = Φ⁻¹(1 − α/2)`: a two-sided interval with coverage `1 − α`.
    #[default]
    TwoSided,
    /// `z = Φ⁻¹(1 − α)`, the quantile `u_{1−α}` taken literally.
    Literal,
}

pub fn normal_quantile(alpha: f64, convention: QuantileConvention) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let p = match convention {
        QuantileConvention::TwoSided => 1.0 - alpha / 2.0,
        QuantileConvention::Literal => 1.0 - alpha,
    };
    Ok(Normal::standard().inverse_cdf(p))
}

/// `β̂ ± z · 2√2 σ̂ Δ / √M̂''`.
pub fn confidence_interval(beta_hat: f64, sigma_hat: f64, delta: f64, curvature: f64, z: f64) -> Result<(f64, f64)> {
    if !(curvature > 0.0) {
        return Err(Error::FlatContrast { curvature });
    }
    let half = z * 2.0 * std::f64::consts::SQRT_2 * sigma_hat * delta / curvature.sqrt();
    Ok((beta_hat - half, beta_hat + half))
}

/// Asymptotic standard deviation `√(8σ²Δ²/M'')` of `β̂`.
pub fn asymptotic_sd(sigma: f64, delta: f64, curvature: f64) -> f64 {
    (8.0 * sigma * sigma * delta * delta / curvature).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureEstimator {
    /// `M̂_N''(β̂)`, including the cosine factor.
    #[default]
    AtEstimate,
    /// `Σ n_p⁻¹ 16 q² |Â_pq|²`.
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub scheme: WeightScheme,
    pub curvature: CurvatureEstimator,
    pub quantile: QuantileConvention,
    /// Threshold for the gcd diagnostic; `None` uses [`default_gcd_threshold`].
    pub gcd_threshold: Option<f64>,
    /// Shrink the search interval to one period when the gcd exceeds 1.
    pub auto_restrict: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            scheme: WeightScheme::Midpoint,
            curvature: CurvatureEstimator::AtEstimate,
            quantile: QuantileConvention::TwoSided,
            gcd_threshold: None,
            auto_restrict: true,
        }
    }
}

/// Result of a full axis estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryEstimate {
    pub beta_hat: f64,
    pub sigma2_hat: f64,
    pub curvature: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
    pub quantile: f64,
    pub contrast_min: f64,
    pub gcd_diagnostic: u32,
    pub n_max: u32,
    pub interval: (f64, f64),
    pub delta: f64,
}

impl SymmetryEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    /// Whether the interval covers `beta` modulo `π`.
    pub fn covers(&self, beta: f64) -> bool {
        let shift = ((self.beta_hat - beta) / PI).round() * PI;
        let b = beta + shift;
        self.ci_low <= b && b <= self.ci_high
    }
}

/// Runs the pipeline on precomputed moments: gcd diagnostic (restricting the
/// interval when it exceeds 1), minimisation, curvature and interval.
pub fn estimate_from_moments(
    ms: &MomentSet,
    sigma2_hat: f64,
    spec: &ContrastSpec,
    alpha: f64,
    options: &EstimateOptions,
) -> Result<SymmetryEstimate> {
    let ms = if ms.n_max() > spec.n_max {
        ms.truncated(spec.n_max)
    } else {
        ms.clone()
    };
    if ms.is_zero() {
        return Err(Error::DegenerateContrast);
    }
    let threshold = options.gcd_threshold.unwrap_or_else(|| default_gcd_threshold(&ms));
    let gcd = gcd_identifiability(&ms, threshold)?;
    let mut search = *spec;
    if options.auto_restrict && gcd > 1 {
        let (a, b) = spec.interval;
        search.interval = (a, b.min(a + PI / gcd as f64));
    }
    let f = ContrastFunction::new(&ms);
    let beta_hat = minimize_function(&f, &search).rem_euclid(PI);
    let curvature = match options.curvature {
        CurvatureEstimator::AtEstimate => f.second_derivative(beta_hat),
        CurvatureEstimator::PlugIn => f.plug_in_curvature(),
    };
    let z = normal_quantile(alpha, options.quantile)?;
    let (ci_low, ci_high) = confidence_interval(beta_hat, sigma2_hat.sqrt(), ms.delta(), curvature, z)?;
    Ok(SymmetryEstimate {
        beta_hat,
        sigma2_hat,
        curvature,
        ci_low,
        ci_high,
        alpha,
        quantile: z,
        contrast_min: f.value(beta_hat),
        gcd_diagnostic: gcd,
        n_max: ms.n_max(),
        interval: search.interval,
        delta: ms.delta(),
    })
}

/// Estimates the reflection axis of a noisy image with default options.
pub fn estimate_axis(
    grid: &ImageGrid,
    spec: &ContrastSpec,
    alpha: f64,
    scheme: WeightScheme,
) -> Result<SymmetryEstimate> {
    let options = EstimateOptions {
        scheme,
        ..EstimateOptions::default()
    };
    estimate_axis_with(grid, spec, alpha, &options)
}

pub fn estimate_axis_with(
    grid: &ImageGrid,
    spec: &ContrastSpec,
    alpha: f64,
    options: &EstimateOptions,
) -> Result<SymmetryEstimate> {
    let ms = estimate_moments(grid, spec.n_max, options.scheme)?;
    let sigma2 = estimate_noise_variance(grid)?;
    estimate_from_moments(&ms, sigma2, spec, alpha, options)
}

/// Axis estimation with cached quadrature weights, for repeated use on one grid size.
#[derive(Debug, Clone)]
pub struct AxisEstimator {
    spec: ContrastSpec,
    alpha: f64,
    options: EstimateOptions,
    moments: MomentEstimator,
}

impl AxisEstimator {
    pub fn new(m: usize, spec: ContrastSpec, alpha: f64, options: EstimateOptions) -> Result<Self> {
        normal_quantile(alpha, options.quantile)?;
        Ok(Self {
            moments: MomentEstimator::new(m, spec.n_max, options.scheme)?,
            spec,
            alpha,
            options,
        })
    }

    pub fn estimate(&self, grid: &ImageGrid) -> Result<SymmetryEstimate> {
        let ms = self.moments.estimate(grid)?;
        let sigma2 = estimate_noise_variance(grid)?;
        estimate_from_moments(&ms, sigma2, &self.spec, self.alpha, &self.options)
    }

    pub fn moments(&self, grid: &ImageGrid) -> Result<MomentSet> {
        self.moments.estimate(grid)
    }
}

/// Smallest truncation `N ≤ max_n` whose reconstruction leaves a residual
/// variance within `tolerance` (relative) of `σ̂²`; `max_n` if none does.
pub fn select_truncation(grid: &ImageGrid, max_n: u32, scheme: WeightScheme, tolerance: f64) -> Result<u32> {
    let sigma2 = estimate_noise_variance(grid)?;
    let full = estimate_moments(grid, max_n, scheme)?;
    let count = grid.masked_count() as f64;
    for n in 0..=max_n {
        let recon = reconstruct(&full.truncated(n), grid)?;
        let resid: f64 = grid
            .masked_pixels()
            .map(|(i, j)| (grid.values()[[i, j]] - recon[[i, j]]).powi(2))
            .sum::<f64>()
            / count;
        if resid <= (1.0 + tolerance) * sigma2 {
            return Ok(n);
        }
    }
    Ok(max_n)
}

/// Checks the phase condition `r_pq ≡ −q β* (mod π)` satisfied by the moments
/// of an image symmetric about `β*`; returns the worst deviation over moments
/// with `q > 0` and modulus above `min_modulus`.
pub fn phase_condition_residual(ms: &MomentSet, beta_star: f64, min_modulus: f64) -> f64 {
    admissible_indices(ms.n_max())
        .into_iter()
        .filter(|idx| idx.q() > 0)
        .filter_map(|idx| {
            let a = ms.get(idx);
            (a.norm() > min_modulus).then(|| {
                let d = (a.arg() + idx.q() as f64 * beta_star).rem_euclid(PI);
                d.min(PI - d)
            })
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zernike::ZernikeIndex;
    use proptest::prelude::*;

    fn idx(p: u32, q: i32) -> ZernikeIndex {
        ZernikeIndex::new(p, q).unwrap()
    }

    fn single_pair(p: u32, q: i32, a: Complex64) -> MomentSet {
        let mut ms = MomentSet::zeros(p.max(2), 0.02, WeightScheme::Midpoint);
        ms.set_real_pair(idx(p, q), a);
        ms
    }

    fn random_real_set(seed: u64, n: u32) -> MomentSet {
        // Small LCG so the moment values are reproducible without an RNG dependency here.
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut ms = MomentSet::zeros(n, 0.02, WeightScheme::Midpoint);
        for k in crate::zernike::half_indices(n) {
            let v = if k.q() == 0 {
                Complex64::new(next(), 0.0)
            } else {
                Complex64::new(next(), next())
            };
            ms.set_real_pair(k, v);
        }
        ms
    }

    #[test]
    fn reflection_at_zero_swaps() {
        let ms = random_real_set(3, 5);
        let r = reflect_moments(&ms, 0.0);
        for (k, a) in ms.iter() {
            assert_eq!(r.get(k.mirrored()), a);
        }
    }

    #[test]
    fn q_zero_only_has_zero_contrast() {
        let mut ms = MomentSet::zeros(4, 0.02, WeightScheme::Midpoint);
        ms.set(idx(0, 0), Complex64::new(2.0, 0.0));
        ms.set(idx(2, 0), Complex64::new(-0.5, 0.0));
        ms.set(idx(4, 0), Complex64::new(0.3, 0.0));
        for beta in [0.0, 0.4, 1.9, 3.0] {
            assert_eq!(contrast(&ms, beta), 0.0);
            assert_eq!(contrast_curvature(&ms, beta), 0.0);
        }
        assert_eq!(plug_in_curvature(&ms), 0.0);
    }

    #[test]
    fn single_pair_closed_form() {
        let a = 0.7;
        let ms = single_pair(2, 2, Complex64::new(a, 0.0));
        for k in 0..50 {
            let beta = k as f64 * PI / 50.0;
            let expected = 12.0 / PI * a * a * (1.0 - (4.0 * beta).cos());
            assert!((contrast(&ms, beta) - expected).abs() < 1e-12);
        }
        assert!((contrast_curvature(&ms, 0.0) - 192.0 * a * a / PI).abs() < 1e-12);
        assert!((plug_in_curvature(&ms) - 192.0 * a * a / PI).abs() < 1e-12);
    }

    #[test]
    fn curvature_matches_finite_differences() {
        let ms = random_real_set(11, 6);
        let h = 1e-4;
        for beta in [0.1, 0.8, 2.2] {
            let fd = (contrast(&ms, beta + h) - 2.0 * contrast(&ms, beta) + contrast(&ms, beta - h)) / (h * h);
            let an = contrast_curvature(&ms, beta);
            assert!((fd - an).abs() < 1e-4 * (1.0 + an.abs()), "{fd} vs {an}");
        }
    }

    #[test]
    fn single_pair_has_two_minimisers() {
        let r: f64 = 0.5;
        let ms = single_pair(2, 2, Complex64::from_polar(0.4, r));
        let minima = contrast_local_minima(&ms, 4096);
        assert_eq!(minima.len(), 2);
        // Zeros where 2r + 4β ≡ 0 (mod 2π).
        for (beta, value) in &minima {
            assert!(value.abs() < 1e-12);
            let phase = (2.0 * r + 4.0 * beta).rem_euclid(2.0 * PI);
            assert!(phase.min(2.0 * PI - phase) < 1e-9);
        }
        let beta = minimize_contrast(&ms, &ContrastSpec::full(2)).unwrap();
        assert!((beta - minima[0].0).abs() < 1e-9, "smallest zero wins: {beta}");
    }

    #[test]
    fn minimiser_recovers_planted_axis() {
        // A symmetric moment set about beta*: A_pq = |A| e^{-iqβ*}.
        for beta_star in [0.0, 0.37, 1.2, PI - 0.3, 3.1] {
            let ms = MomentSet::from_fn(5, |k| {
                let mag = 1.0 / (1.0 + k.p() as f64 + k.q().abs() as f64);
                Complex64::from_polar(mag, -(k.q() as f64) * beta_star)
            });
            let beta = minimize_contrast(&ms, &ContrastSpec::full(5)).unwrap();
            let d = (beta - beta_star).rem_euclid(PI);
            assert!(d.min(PI - d) < 1e-10, "{beta_star}: {beta}");
            assert!(phase_condition_residual(&ms, beta_star, 1e-9) < 1e-12);
        }
    }

    #[test]
    fn restricted_interval_is_respected() {
        let ms = MomentSet::from_fn(4, |k| Complex64::from_polar(1.0, -(k.q() as f64) * 0.2));
        let spec = ContrastSpec::new(4, PI / 4.0, 3.0 * PI / 4.0, 1024).unwrap();
        let beta = minimize_contrast(&ms, &spec).unwrap();
        assert!((PI / 4.0..=3.0 * PI / 4.0).contains(&beta));
    }

    #[test]
    fn degenerate_contrast_is_an_error() {
        let ms = MomentSet::zeros(3, 0.1, WeightScheme::Midpoint);
        assert_eq!(
            minimize_contrast(&ms, &ContrastSpec::full(3)),
            Err(Error::DegenerateContrast)
        );
    }

    #[test]
    fn gcd_examples() {
        let mut ms = MomentSet::zeros(4, 0.1, WeightScheme::Midpoint);
        ms.set_real_pair(idx(2, 2), Complex64::new(1.0, 0.0));
        ms.set_real_pair(idx(4, 4), Complex64::new(0.5, 0.0));
        assert_eq!(gcd_identifiability(&ms, 1e-6), Ok(2));
        ms.set_real_pair(idx(3, 3), Complex64::new(0.2, 0.0));
        assert_eq!(gcd_identifiability(&ms, 1e-6), Ok(1));
        let empty = MomentSet::zeros(4, 0.1, WeightScheme::Midpoint);
        assert!(matches!(
            gcd_identifiability(&empty, 0.0),
            Err(Error::NoAngularInformation { .. })
        ));
    }

    #[test]
    fn rounding_level_angular_moments_are_ignored() {
        let ms = MomentSet::from_fn(4, |i| Complex64::new(if i.q() == 0 { 1.0 } else { 1e-17 }, 0.0));
        assert!(matches!(
            gcd_identifiability(&ms, default_gcd_threshold(&ms)),
            Err(Error::NoAngularInformation { .. })
        ));
    }

    #[test]
    fn interval_arithmetic() {
        let (lo, hi) = confidence_interval(1.0, 1.0, 0.04, 100.0, 1.96).unwrap();
        let half = 0.5 * (hi - lo);
        assert!((half - 0.022173).abs() < 5e-6, "{half}");
        assert!((half - 1.96 * 2.0 * 2f64.sqrt() * 0.004).abs() < 1e-15);
        let (lo0, hi0) = confidence_interval(1.0, 0.0, 0.04, 100.0, 1.96).unwrap();
        assert_eq!((lo0, hi0), (1.0, 1.0));
        let (lo2, hi2) = confidence_interval(1.0, 1.0, 0.08, 100.0, 1.96).unwrap();
        assert!(((hi2 - lo2) - 2.0 * (hi - lo)).abs() < 1e-15);
        assert!(matches!(
            confidence_interval(1.0, 1.0, 0.04, 0.0, 1.96),
            Err(Error::FlatContrast { .. })
        ));
    }

    #[test]
    fn quantile_conventions() {
        let z = normal_quantile(0.05, QuantileConvention::TwoSided).unwrap();
        assert!((z - 1.959_963_984_540_054).abs() < 1e-9);
        let z = normal_quantile(0.05, QuantileConvention::Literal).unwrap();
        assert!((z - 1.644_853_626_951_472_2).abs() < 1e-9);
        assert!(normal_quantile(1.0, QuantileConvention::TwoSided).is_err());
    }

    #[test]
    fn checkerboard_variance() {
        let c = 0.7;
        let g = ImageGrid::from_fn(41, |_, _| 0.0).unwrap();
        let vals = ndarray::Array2::from_shape_fn((41, 41), |(i, j)| if (i + j) % 2 == 0 { c } else { -c });
        let g = g.with_values(vals).unwrap();
        let s2 = estimate_noise_variance(&g).unwrap();
        assert!((s2 - 2.0 * c * c).abs() < 1e-12, "{s2}");
    }

    #[test]
    fn variance_needs_neighbours() {
        let g = ImageGrid::zeros(1).unwrap();
        assert_eq!(estimate_noise_variance(&g), Err(Error::EmptyDifferenceSum));
    }

    #[test]
    fn covers_handles_wraparound() {
        let est = SymmetryEstimate {
            beta_hat: PI - 0.01,
            sigma2_hat: 1.0,
            curvature: 1.0,
            ci_low: PI - 0.03,
            ci_high: PI + 0.01,
            alpha: 0.05,
            quantile: 1.96,
            contrast_min: 0.0,
            gcd_diagnostic: 1,
            n_max: 3,
            interval: (0.0, PI),
            delta: 0.1,
        };
        assert!(est.covers(0.0));
        assert!(!est.covers(0.5));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn contrast_forms_agree(seed in any::<u64>(), beta in 0.0f64..PI) {
            let ms = random_real_set(seed, 7);
            let direct = contrast(&ms, beta);
            let cosine = contrast_cosine_form(&ms, beta);
            let trig = ContrastFunction::new(&ms).value(beta);
            prop_assert!((direct - cosine).abs() < 1e-10);
            prop_assert!((direct - trig).abs() < 1e-10);
            prop_assert!(direct >= 0.0);
            prop_assert!((cosine - contrast_cosine_form(&ms, beta + PI)).abs() < 1e-10);
        }

        #[test]
        fn reflection_is_an_involution(seed in any::<u64>(), beta in 0.0f64..PI) {
            let ms = random_real_set(seed, 6);
            let twice = reflect_moments(&reflect_moments(&ms, beta), beta);
            for ((_, a), (_, b)) in ms.iter().zip(twice.iter()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
            let once = reflect_moments(&ms, beta);
            for (k, a) in once.iter() {
                prop_assert!((a.norm() - ms.get(k.mirrored()).norm()).abs() < 1e-12);
            }
        }

        #[test]
        fn general_sets_match_direct_form(seed in any::<u64>(), beta in 0.0f64..PI) {
            // Moment sets that are not conjugate symmetric still use the exact trig form.
            let ms = random_real_set(seed, 4);
            let other = random_real_set(seed ^ 0xdead_beef, 4);
            let mut mixed = ms.clone();
            for (k, a) in other.iter().filter(|(k, _)| k.q() < 0) {
                mixed.set(k, a);
            }
            let f = ContrastFunction::new(&mixed);
            prop_assert!((f.value(beta) - contrast(&mixed, beta)).abs() < 1e-10);
        }
    }
}
