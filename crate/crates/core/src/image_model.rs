//! Test images, noise models and the Anscombe transform.
//!
//! The three standard targets live on the unit disc and are normalised so that
//! `∬_D f² = 1`:
//!
//! * `f1 = c₁ x (1−ρ) (sin(y + √(x²+y⁴)) + sin(−y + √(x²+y⁴)))`, symmetric under `y ↦ −y`;
//! * `f2 = c₂ ρ(1−ρ) Σ_k exp(cos(θ − φ_k)/0.02)` with offsets
//!   `φ ∈ {0, −0.6, 0.3−π, −0.9−π}`, symmetric about the axis at `π − 0.3`;
//! * `f3 = c₃ ρ(1−ρ) (e^{cos θ/0.2} + e^{cos(θ+0.9)/0.2} + 0.6 e^{cos(θ−1.7)/0.2})`,
//!   which has no reflection symmetry.
//!
//! The exponentials are evaluated as `exp((cos − 1)/s)`; the dropped factor
//! `e^{1/s}` is absorbed by the normalisation constant.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{pixel_center, ImageGrid};

/// Grid size for the midpoint sums that fix the normalisation constants.
pub const NORMALIZATION_GRID: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetId {
    F1,
    F2,
    F3,
}

impl TargetId {
    /// The symmetry axis, where one exists.
    pub fn beta_star(&self) -> Option<f64> {
        match self {
            TargetId::F1 => Some(0.0),
            TargetId::F2 => Some(PI - 0.3),
            TargetId::F3 => None,
        }
    }

    /// The target before normalisation.
    pub fn raw_value(&self, x: f64, y: f64) -> f64 {
        let rho = x.hypot(y);
        match self {
            TargetId::F1 => {
                let s = (x * x + y.powi(4)).sqrt();
                x * (1.0 - rho) * ((y + s).sin() + (-y + s).sin())
            }
            TargetId::F2 => {
                let theta = y.atan2(x);
                let lobe = |offset: f64| (((theta + offset).cos() - 1.0) / 0.02).exp();
                rho * (1.0 - rho) * (lobe(0.0) + lobe(0.6) + lobe(-0.3 + PI) + lobe(0.9 + PI))
            }
            TargetId::F3 => {
                let theta = y.atan2(x);
                let lobe = |offset: f64| (((theta + offset).cos() - 1.0) / 0.2).exp();
                rho * (1.0 - rho) * (lobe(0.0) + lobe(0.9) + 0.6 * lobe(-1.7))
            }
        }
    }

    /// `c` with `∬_D (c f_raw)² = 1`, from a midpoint sum on a 1001×1001 grid,
    /// rounded to six significant digits.
    pub fn normalization(&self) -> f64 {
        static CACHE: [OnceLock<f64>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let slot = match self {
            TargetId::F1 => &CACHE[0],
            TargetId::F2 => &CACHE[1],
            TargetId::F3 => &CACHE[2],
        };
        *slot.get_or_init(|| {
            let c = 1.0 / squared_integral(NORMALIZATION_GRID, |x, y| self.raw_value(x, y)).sqrt();
            round_significant(c, 6)
        })
    }
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TargetId::F1 => "f1",
            TargetId::F2 => "f2",
            TargetId::F3 => "f3",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for TargetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(TargetId::F1),
            "f2" => Ok(TargetId::F2),
            "f3" => Ok(TargetId::F3),
            other => Err(Error::InvalidArgument(format!("unknown target '{other}'"))),
        }
    }
}

/// Midpoint approximation of `∬_D g²` on an `m × m` grid.
pub fn squared_integral(m: usize, g: impl Fn(f64, f64) -> f64) -> f64 {
    let delta = 2.0 / m as f64;
    let mut sum = 0.0;
    for i in 0..m {
        let x = pixel_center(m, i);
        let mut row = 0.0;
        for j in 0..m {
            let y = pixel_center(m, j);
            if x * x + y * y <= 1.0 {
                row += g(x, y).powi(2);
            }
        }
        sum += row;
    }
    sum * delta * delta
}

fn round_significant(v: f64, digits: i32) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

pub type CustomTarget = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Which function to sample and its normalisation constant.
#[derive(Clone)]
pub struct TargetSpec {
    kind: TargetKind,
    normalization: f64,
}

#[derive(Clone)]
enum TargetKind {
    Standard(TargetId),
    Custom(CustomTarget),
}

impl fmt::Debug for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            TargetKind::Standard(id) => id.to_string(),
            TargetKind::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("TargetSpec")
            .field("kind", &kind)
            .field("normalization", &self.normalization)
            .finish()
    }
}

impl TargetSpec {
    pub fn standard(id: TargetId) -> Self {
        Self {
            kind: TargetKind::Standard(id),
            normalization: id.normalization(),
        }
    }

    pub fn custom(f: CustomTarget, normalization: f64) -> Result<Self> {
        if !(normalization > 0.0) {
            return Err(Error::InvalidArgument("normalization must be positive".into()));
        }
        Ok(Self {
            kind: TargetKind::Custom(f),
            normalization,
        })
    }

    pub fn id(&self) -> Option<TargetId> {
        match self.kind {
            TargetKind::Standard(id) => Some(id),
            TargetKind::Custom(_) => None,
        }
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let raw = match &self.kind {
            TargetKind::Standard(id) => id.raw_value(x, y),
            TargetKind::Custom(f) => f(x, y),
        };
        self.normalization * raw
    }
}

/// Samples the target at in-disc pixel centres of an `m × m` grid.
pub fn eval_target(spec: &TargetSpec, m: usize) -> Result<ImageGrid> {
    ImageGrid::from_fn(m, |x, y| spec.value(x, y))
}

/// Rescales so that the in-disc peak equals `snr · sigma`.
pub fn snr_scale(image: &ImageGrid, snr: f64, sigma: f64) -> Result<ImageGrid> {
    if !(snr > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidArgument("snr and sigma must be positive".into()));
    }
    let peak = image.peak();
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "image needs a positive peak to scale, got {peak}"
        )));
    }
    Ok(image.scaled(snr * sigma / peak))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation for Gaussian noise; ignored for Poisson.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        }
    }

    pub fn poisson(seed: u64) -> Self {
        Self {
            kind: NoiseKind::Poisson,
            sigma: 0.0,
            seed,
        }
    }
}

/// Deterministic generator used for all simulated noise (ChaCha8).
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One Poisson draw; a zero mean gives zero.
pub fn poisson_sample(rng: &mut ChaCha8Rng, mean: f64) -> Result<f64> {
    if mean == 0.0 {
        return Ok(0.0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::InvalidArgument(format!("poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng))
}

/// Adds i.i.d. `N(0, σ²)` noise, or replaces each pixel by a Poisson draw
/// with that mean. Pixels are visited in row-major order.
pub fn add_noise(image: &ImageGrid, spec: &NoiseSpec) -> Result<ImageGrid> {
    add_noise_with(image, spec, &mut noise_rng(spec.seed, 0))
}

pub fn add_noise_with(image: &ImageGrid, spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Result<ImageGrid> {
    let mut out = image.clone();
    match spec.kind {
        NoiseKind::Gaussian => {
            if !(spec.sigma >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sigma must be >= 0, got {}",
                    spec.sigma
                )));
            }
            if spec.sigma == 0.0 {
                return Ok(out);
            }
            for v in out.values_mut().iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *v += spec.sigma * e;
            }
        }
        NoiseKind::Poisson => {
            check_nonnegative(image)?;
            for v in out.values_mut().iter_mut() {
                *v = poisson_sample(rng, *v)?;
            }
        }
    }
    Ok(out)
}

fn check_nonnegative(image: &ImageGrid) -> Result<()> {
    if let Some(((i, j), &value)) = image.values().indexed_iter().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeIntensity { value, i, j });
    }
    Ok(())
}

/// `2√(x + 3/8)`.
#[inline]
pub fn anscombe_value(x: f64) -> f64 {
    2.0 * (x + 0.375).sqrt()
}

/// Pixelwise Anscombe transform; the disc mask is unchanged.
pub fn anscombe(image: &ImageGrid) -> Result<ImageGrid> {
    check_nonnegative(image)?;
    Ok(image.map(anscombe_value))
}
