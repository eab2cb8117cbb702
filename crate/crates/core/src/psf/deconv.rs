//! Richardson–Lucy deconvolution and iterate-selection distances.
//!
//! With `H` the zero-extended convolution by the kernel, the update is
//!
//! `γ⁽ᵏ⁺¹⁾ = γ⁽ᵏ⁾ ⊙ Hᵀ(Z / max(Hγ⁽ᵏ⁾, ε)) / Hᵀ1`,
//!
//! the EM step for the Poisson model `Z ~ Poisson(Hγ)`. Dividing by `Hᵀ1`
//! keeps the step an exact EM step near the border, where zero extension
//! makes the column sums of `H` less than one; in the interior `Hᵀ1 = 1`.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::kernel::filter_into;
use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Floor for the predicted intensity in the ratio `Z / Hγ`.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Default number of iterations.
pub const DEFAULT_ITERATIONS: usize = 500;

/// One iterate, as seen by a [`richardson_lucy_with`] callback.
#[derive(Debug)]
pub struct RlIterate<'a> {
    /// 0 for the starting image.
    pub k: usize,
    pub estimate: &'a Array2<f64>,
    /// `Σ Z log μ - μ` with `μ = max(Hγ⁽ᵏ⁾, ε)`, without `log Z!`.
    pub log_likelihood: f64,
    pub mass: f64,
}

/// Whole-run diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlSummary {
    pub iterations: usize,
    pub log_likelihood: Vec<f64>,
    pub mass: Vec<f64>,
    /// No iterate lowered the log-likelihood by more than rounding.
    pub monotone: bool,
    pub min_value: f64,
}

impl RlSummary {
    /// Largest `|mass_k - mass_0| / mass_0`.
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        self.mass
            .iter()
            .map(|m| (m - m0).abs() / m0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

fn log_likelihood(z: &Array2<f64>, mu: &Array2<f64>) -> f64 {
    let mut ll = 0.0;
    Zip::from(z).and(mu).for_each(|&z, &mu| {
        let mu = mu.max(RATIO_FLOOR);
        if z > 0.0 {
            ll += z * mu.ln();
        }
        ll -= mu;
    });
    ll
}

/// Tolerance for "nondecreasing" log-likelihood: summation rounding only.
fn rounding_slack(ll: f64, prev: f64, counts: f64) -> f64 {
    1e-11 * (ll.abs() + prev.abs() + counts).max(1.0)
}

/// Runs `max_iter` iterations from the constant image with the data's mass,
/// calling `callback` on iterates `0..=max_iter`.
pub fn richardson_lucy_with(
    data: &ImageGrid,
    kernel: &ImageGrid,
    max_iter: usize,
    callback: impl FnMut(&RlIterate<'_>),
) -> Result<RlSummary> {
    let (r, c) = data.values().dim();
    let start = Array2::from_elem((r, c), data.sum() / (r * c) as f64);
    richardson_lucy_from(data, kernel, start, max_iter, callback)
}

/// As [`richardson_lucy_with`], from a given nonnegative start.
pub fn richardson_lucy_from(
    data: &ImageGrid,
    kernel: &ImageGrid,
    start: Array2<f64>,
    max_iter: usize,
    mut callback: impl FnMut(&RlIterate<'_>),
) -> Result<RlSummary> {
    let z = data.values();
    let k = kernel.values();
    let (kr, kc) = k.dim();
    if kr != kc || kr % 2 == 0 {
        return Err(Error::DimensionMismatch(format!(
            "kernel must be square with odd size, got {kr}x{kc}"
        )));
    }
    if !(k.sum() > 0.0) {
        return Err(Error::InvalidArgument("kernel sum must be positive".into()));
    }
    if let Some(((i, j), &value)) = z.indexed_iter().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeIntensity { value, i, j });
    }
    let dim = z.dim();
    if start.dim() != dim {
        return Err(Error::DimensionMismatch("start and data sizes differ".into()));
    }
    if start.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("start image must be nonnegative".into()));
    }
    let mut gamma = start;
    let counts = z.sum();

    let mut col_sums = Array2::zeros(dim);
    filter_into(&mut col_sums, Array2::<f64>::ones(dim).view(), k.view(), -1);

    let mut mu = Array2::zeros(dim);
    let mut ratio = Array2::zeros(dim);
    let mut back = Array2::zeros(dim);
    let mut summary = RlSummary {
        iterations: max_iter,
        log_likelihood: Vec::with_capacity(max_iter + 1),
        mass: Vec::with_capacity(max_iter + 1),
        monotone: true,
        min_value: f64::INFINITY,
    };

    for it in 0..=max_iter {
        filter_into(&mut mu, gamma.view(), k.view(), 1);
        let ll = log_likelihood(z, &mu);
        let mass = gamma.sum();
        if let Some(&prev) = summary.log_likelihood.last() {
            if ll < prev - rounding_slack(ll, prev, counts) {
                summary.monotone = false;
            }
        }
        summary.log_likelihood.push(ll);
        summary.mass.push(mass);
        summary.min_value = summary
            .min_value
            .min(gamma.iter().copied().fold(f64::INFINITY, f64::min));
        callback(&RlIterate {
            k: it,
            estimate: &gamma,
            log_likelihood: ll,
            mass,
        });
        if it == max_iter {
            break;
        }
        Zip::from(&mut ratio).and(z).and(&mu).for_each(|r, &z, &mu| {
            *r = z / mu.max(RATIO_FLOOR);
        });
        filter_into(&mut back, ratio.view(), k.view(), -1);
        Zip::from(&mut gamma).and(&back).and(&col_sums).for_each(|g, &b, &s| {
            *g = if s > 0.0 { *g * b / s } else { 0.0 };
        });
    }
    Ok(summary)
}

/// All iterates `γ⁽⁰⁾, …, γ⁽ᵐᵃˣ⁾` of the iteration.
pub fn richardson_lucy(data: &ImageGrid, kernel: &ImageGrid, max_iter: usize) -> Result<Vec<ImageGrid>> {
    let mut out = Vec::with_capacity(max_iter + 1);
    richardson_lucy_with(data, kernel, max_iter, |it| out.push(it.estimate.clone()))?;
    out.into_iter().map(|v| data.with_values(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DistanceMetric {
    /// `Σ |a - b|` over pixels.
    L1,
    /// `Σ (a - b)²` over pixels.
    L2,
}

pub fn distance(a: &Array2<f64>, b: &Array2<f64>, metric: DistanceMetric) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|&a, &b| {
        let d = a - b;
        acc += match metric {
            DistanceMetric::L1 => d.abs(),
            DistanceMetric::L2 => d * d,
        };
    });
    acc
}

/// Smallest distance to `truth` over the iterates, with its index. Ties keep
/// the earliest iterate.
pub fn optimal_iterate_distance<'a>(
    iterates: impl IntoIterator<Item = &'a ImageGrid>,
    truth: &ImageGrid,
    metric: DistanceMetric,
) -> Result<(usize, f64)> {
    let mut tracker = BestIterate::new(metric);
    for (k, it) in iterates.into_iter().enumerate() {
        if it.values().dim() != truth.values().dim() {
            return Err(Error::DimensionMismatch("iterate and truth sizes differ".into()));
        }
        tracker.observe(k, it.values(), truth.values());
    }
    tracker
        .best()
        .ok_or_else(|| Error::InvalidArgument("no iterates to compare".into()))
}

/// Streaming form of [`optimal_iterate_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestIterate {
    pub metric: DistanceMetric,
    best: Option<(usize, f64)>,
}

impl BestIterate {
    pub fn new(metric: DistanceMetric) -> Self {
        Self { metric, best: None }
    }

    pub fn observe(&mut self, k: usize, estimate: &Array2<f64>, truth: &Array2<f64>) {
        let d = distance(estimate, truth, self.metric);
        if self.best.is_none_or(|(_, b)| d < b) {
            self.best = Some((k, d));
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psf::kernel::{convolve, gaussian_psf};

    fn interior_blob(n: usize) -> ImageGrid {
        let c = n as f64 / 2.0;
        ImageGrid::from_values(Array2::from_shape_fn((n, n), |(i, j)| {
            let r = (i as f64 - c).hypot(j as f64 - c);
            if r < n as f64 / 5.0 {
                10.0 + (i % 3) as f64
            } else {
                0.0
            }
        }))
        .unwrap()
    }

    #[test]
    fn exact_object_is_a_fixed_point() {
        let k = gaussian_psf(5, 1.0, 2.0, 2.0, 0.0).unwrap();
        let gamma = Array2::from_elem((16, 16), 2.0);
        let data = convolve(&ImageGrid::from_values(gamma.clone()).unwrap(), &k).unwrap();
        let mut first = None;
        richardson_lucy_from(&data, &k, gamma, 1, |it| {
            if it.k == 1 {
                first = Some(it.estimate.clone());
            }
        })
        .unwrap();
        for &g in first.unwrap().iter() {
            assert!((g - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_kernel_returns_data_after_one_step() {
        let mut d = Array2::zeros((5, 5));
        d[[2, 2]] = 1.0;
        let k = ImageGrid::from_values(d).unwrap();
        let data = interior_blob(20);
        let its = richardson_lucy(&data, &k, 1).unwrap();
        for (a, b) in its[1].values().iter().zip(data.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn likelihood_increases_and_mass_is_conserved() {
        let k = gaussian_psf(7, 1.0, 2.5, 3.0, 0.2).unwrap();
        let truth = interior_blob(40);
        let data = convolve(&truth, &k).unwrap().map(|v| v.round());
        let summary = richardson_lucy_with(&data, &k, 200, |_| {}).unwrap();
        assert!(summary.monotone);
        assert!(summary.min_value >= 0.0);
        assert!(summary.max_mass_drift() < 1e-8, "{}", summary.max_mass_drift());
    }

    #[test]
    fn distances() {
        let truth = interior_blob(10);
        let doubled = truth.scaled(2.0);
        let sq: f64 = truth.values().iter().map(|v| v * v).sum();
        let (k, d) = optimal_iterate_distance([&doubled], &truth, DistanceMetric::L2).unwrap();
        assert_eq!(k, 0);
        assert!((d - sq).abs() < 1e-9);
        let (k, d) = optimal_iterate_distance([&doubled, &truth, &doubled], &truth, DistanceMetric::L1).unwrap();
        assert_eq!((k, d), (1, 0.0));
        assert!(optimal_iterate_distance([], &truth, DistanceMetric::L1).is_err());
    }
}
