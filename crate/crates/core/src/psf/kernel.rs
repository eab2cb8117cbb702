//! Discrete PSF kernels, zero-extended convolution and bead simulation.
//!
//! Kernels are odd-sized square arrays whose centre pixel `(c, c)`,
//! `c = (k - 1)/2`, sits at offset zero. Pixel `(i, j)` of a kernel lies at
//! `((i - c)·h, (j - c)·h)` for pixel size `h`, with the first axis along `x`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::image_model::{add_noise_with, noise_rng, NoiseSpec};

/// `2√(2 ln 2)`: the FWHM of a Gaussian in units of its standard deviation.
pub fn fwhm_per_sigma() -> f64 {
    2.0 * (2.0 * std::f64::consts::LN_2).sqrt()
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / fwhm_per_sigma()
}

/// Gaussian kernel point-sampled at pixel centres, normalised to unit sum.
/// `angle` rotates the `x` principal axis counter-clockwise.
pub fn gaussian_psf(size: usize, pixel_size: f64, fwhm_x: f64, fwhm_y: f64, angle: f64) -> Result<ImageGrid> {
    if size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("kernel size must be odd, got {size}")));
    }
    if !(pixel_size > 0.0 && fwhm_x > 0.0 && fwhm_y > 0.0) {
        return Err(Error::InvalidArgument("pixel size and widths must be positive".into()));
    }
    let (sx, sy) = (fwhm_to_sigma(fwhm_x), fwhm_to_sigma(fwhm_y));
    let (sin, cos) = angle.sin_cos();
    let c = (size / 2) as f64;
    let raw = Array2::from_shape_fn((size, size), |(i, j)| {
        let x = (i as f64 - c) * pixel_size;
        let y = (j as f64 - c) * pixel_size;
        let u = cos * x + sin * y;
        let v = -sin * x + cos * y;
        (-0.5 * (u * u / (sx * sx) + v * v / (sy * sy))).exp()
    });
    normalized_kernel(raw)
}

/// Rescales a nonnegative array to unit sum.
pub fn normalized_kernel(values: Array2<f64>) -> Result<ImageGrid> {
    if let Some(&v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "kernel entries must be nonnegative, found {v}"
        )));
    }
    let total = values.sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("kernel has zero mass".into()));
    }
    ImageGrid::from_values(values / total)
}

fn check_kernel(kernel: &Array2<f64>) -> Result<usize> {
    let (r, c) = kernel.dim();
    if r != c || r % 2 == 0 {
        return Err(Error::DimensionMismatch(format!(
            "kernel must be square with odd size, got {r}x{c}"
        )));
    }
    Ok(r / 2)
}

/// Shared loop for convolution (`sign = 1`) and correlation (`sign = -1`):
/// `out[i, j] += k[a, b] · img[i - sign·(a - c), j - sign·(b - c)]`, zero
/// outside the image. Each tap is one contiguous axpy per row.
pub(crate) fn filter_into(out: &mut Array2<f64>, image: ArrayView2<f64>, kernel: ArrayView2<f64>, sign: isize) {
    let (rows, cols) = image.dim();
    let c = (kernel.nrows() / 2) as isize;
    out.fill(0.0);
    let img = image.as_standard_layout();
    let src = img.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("output must be contiguous");
    for ((a, b), &k) in kernel.indexed_iter() {
        if k == 0.0 {
            continue;
        }
        let da = sign * (a as isize - c);
        let db = sign * (b as isize - c);
        // Output columns j with 0 <= j - db < cols.
        let j0 = db.max(0) as usize;
        let j1 = (cols as isize + db).min(cols as isize);
        if j1 <= j0 as isize {
            continue;
        }
        let j1 = j1 as usize;
        for i in 0..rows {
            let s = i as isize - da;
            if s < 0 || s >= rows as isize {
                continue;
            }
            let s = s as usize;
            let o = &mut dst[i * cols + j0..i * cols + j1];
            let start = (s * cols) as isize + j0 as isize - db;
            let x = &src[start as usize..start as usize + (j1 - j0)];
            for (o, &x) in o.iter_mut().zip(x) {
                *o += k * x;
            }
        }
    }
}

/// Same-size convolution `k ∗ image` with zero extension.
pub fn convolve(image: &ImageGrid, kernel: &ImageGrid) -> Result<ImageGrid> {
    check_kernel(kernel.values())?;
    let mut out = Array2::zeros(image.values().dim());
    filter_into(&mut out, image.values().view(), kernel.values().view(), 1);
    image.with_values(out)
}

/// Adjoint of [`convolve`]: correlation with the kernel.
pub fn correlate(image: &ImageGrid, kernel: &ImageGrid) -> Result<ImageGrid> {
    check_kernel(kernel.values())?;
    let mut out = Array2::zeros(image.values().dim());
    filter_into(&mut out, image.values().view(), kernel.values().view(), -1);
    image.with_values(out)
}

/// Simulated bead acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeadSpec {
    /// nm
    pub fwhm_x: f64,
    /// nm
    pub fwhm_y: f64,
    /// nm
    pub bead_diameter: f64,
    /// Expected counts at the brightest pixel.
    pub peak_intensity: f64,
    /// nm
    pub pixel_size: f64,
    /// Pixels per side of the bead image (odd).
    pub image_size: usize,
}

impl Default for BeadSpec {
    fn default() -> Self {
        Self {
            fwhm_x: 250.0 / std::f64::consts::SQRT_2,
            fwhm_y: 250.0,
            bead_diameter: 50.0,
            peak_intensity: 22.0,
            pixel_size: 64.0,
            image_size: 13,
        }
    }
}

impl BeadSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.fwhm_x,
            self.fwhm_y,
            self.bead_diameter,
            self.peak_intensity,
            self.pixel_size,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("bead parameters must be positive".into()));
        }
        if self.image_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "bead image size must be odd, got {}",
                self.image_size
            )));
        }
        Ok(())
    }

    /// The axis-aligned Gaussian PSF described by the widths.
    pub fn true_psf(&self) -> Result<ImageGrid> {
        gaussian_psf(self.image_size, self.pixel_size, self.fwhm_x, self.fwhm_y, 0.0)
    }
}

/// Fraction of each pixel covered by a centred disc, from 16×16 subsamples.
fn bead_indicator(size: usize, pixel_size: f64, diameter: f64) -> Array2<f64> {
    const SUB: usize = 16;
    let c = (size / 2) as f64;
    let r2 = (0.5 * diameter / pixel_size).powi(2);
    Array2::from_shape_fn((size, size), |(i, j)| {
        let mut hits = 0usize;
        for a in 0..SUB {
            let x = i as f64 - c - 0.5 + (a as f64 + 0.5) / SUB as f64;
            for b in 0..SUB {
                let y = j as f64 - c - 0.5 + (b as f64 + 0.5) / SUB as f64;
                if x * x + y * y <= r2 {
                    hits += 1;
                }
            }
        }
        hits as f64 / (SUB * SUB) as f64
    })
}

/// Noise-free bead image: the rasterised bead blurred by `psf`, scaled so
/// its brightest pixel equals `peak_intensity`.
pub fn bead_intensity(spec: &BeadSpec, psf: &ImageGrid) -> Result<ImageGrid> {
    spec.validate()?;
    let mut bead = bead_indicator(spec.image_size, spec.pixel_size, spec.bead_diameter);
    if bead.sum() == 0.0 {
        // Smaller than the subsample spacing: a point source.
        bead[[spec.image_size / 2, spec.image_size / 2]] = 1.0;
    }
    let blurred = convolve(&ImageGrid::from_values(bead)?, psf)?;
    let peak = blurred.max_value();
    Ok(blurred.scaled(spec.peak_intensity / peak))
}

/// Poisson-sampled bead image, drawn from stream 0 of `seed`.
pub fn simulate_bead_image(spec: &BeadSpec, psf: &ImageGrid, seed: u64) -> Result<ImageGrid> {
    let intensity = bead_intensity(spec, psf)?;
    add_noise_with(&intensity, &NoiseSpec::poisson(seed), &mut noise_rng(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta(size: usize) -> ImageGrid {
        let mut k = Array2::zeros((size, size));
        k[[size / 2, size / 2]] = 1.0;
        ImageGrid::from_values(k).unwrap()
    }

    /// Direct-sum oracle for the convolution.
    fn naive_convolve(img: &Array2<f64>, k: &Array2<f64>) -> Array2<f64> {
        let (n, m) = img.dim();
        let c = (k.nrows() / 2) as isize;
        Array2::from_shape_fn((n, m), |(i, j)| {
            let mut acc = 0.0;
            for ((a, b), &w) in k.indexed_iter() {
                let s = i as isize - (a as isize - c);
                let t = j as isize - (b as isize - c);
                if s >= 0 && t >= 0 && (s as usize) < n && (t as usize) < m {
                    acc += w * img[[s as usize, t as usize]];
                }
            }
            acc
        })
    }

    #[test]
    fn fwhm_conversion() {
        assert!((fwhm_to_sigma(250.0) - 106.16523).abs() < 1e-4);
    }

    #[test]
    fn gaussian_kernel_shape() {
        let k = gaussian_psf(15, 64.0, 200.0, 200.0, 0.0).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-12);
        let v = k.values();
        for i in 0..15 {
            for j in 0..15 {
                assert!(
                    (v[[i, j]] - v[[14 - j, i]]).abs() < 1e-15,
                    "isotropic kernel is 90° invariant"
                );
                if (i, j) != (7, 7) {
                    assert!(v[[i, j]] < v[[7, 7]]);
                }
            }
        }
    }

    #[test]
    fn rotated_kernel_swaps_axes() {
        let a = gaussian_psf(11, 64.0, 150.0, 250.0, 0.0).unwrap();
        let b = gaussian_psf(11, 64.0, 250.0, 150.0, std::f64::consts::FRAC_PI_2).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn convolution_matches_direct_sum_and_correlation_is_adjoint() {
        let img = Array2::from_shape_fn((9, 9), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let k = Array2::from_shape_fn((5, 5), |(a, b)| 1.0 + (a * 5 + b) as f64 * 0.1);
        let g = ImageGrid::from_values(img.clone()).unwrap();
        let kg = ImageGrid::from_values(k.clone()).unwrap();
        let fast = convolve(&g, &kg).unwrap();
        let slow = naive_convolve(&img, &k);
        for (a, b) in fast.values().iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // <Kx, y> = <x, K^T y>
        let y = Array2::from_shape_fn((9, 9), |(i, j)| (i as f64 * 0.3).sin() + j as f64 * 0.01);
        let gy = ImageGrid::from_values(y.clone()).unwrap();
        let lhs = (fast.values() * &y).sum();
        let rhs = (correlate(&gy, &kg).unwrap().values() * &img).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let img = ImageGrid::from_values(Array2::from_shape_fn((8, 8), |(i, j)| (i * j) as f64)).unwrap();
        assert_eq!(convolve(&img, &delta(5)).unwrap(), img);
    }

    #[test]
    fn constant_interior_is_preserved() {
        let img = ImageGrid::from_values(Array2::from_elem((20, 20), 3.0)).unwrap();
        let k = gaussian_psf(7, 1.0, 2.0, 3.0, 0.4).unwrap();
        let out = convolve(&img, &k).unwrap();
        for i in 3..17 {
            for j in 3..17 {
                assert!((out.values()[[i, j]] - 3.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn convolution_commutes_with_translation() {
        let k = gaussian_psf(5, 1.0, 2.0, 1.5, 0.3).unwrap();
        let mut a = Array2::zeros((24, 24));
        a[[8, 9]] = 2.0;
        a[[10, 7]] = 1.0;
        let mut b = Array2::zeros((24, 24));
        b[[11, 13]] = 2.0;
        b[[13, 11]] = 1.0;
        let ca = convolve(&ImageGrid::from_values(a).unwrap(), &k).unwrap();
        let cb = convolve(&ImageGrid::from_values(b).unwrap(), &k).unwrap();
        for i in 4..18 {
            for j in 4..18 {
                assert_eq!(ca.values()[[i, j]], cb.values()[[i + 3, j + 4]]);
            }
        }
    }

    #[test]
    fn bead_has_requested_peak_and_is_reproducible() {
        let spec = BeadSpec::default();
        let psf = spec.true_psf().unwrap();
        let clean = bead_intensity(&spec, &psf).unwrap();
        assert!((clean.max_value() - 22.0).abs() < 1e-12);
        // A 50 nm bead inside a 64 nm pixel is a point source: the image is the PSF.
        let scale = 22.0 / psf.max_value();
        for (a, b) in clean.values().iter().zip(psf.values()) {
            assert!((a - b * scale).abs() < 1e-12);
        }
        let a = simulate_bead_image(&spec, &psf, 7).unwrap();
        let b = simulate_bead_image(&spec, &psf, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| v.fract() == 0.0 && *v >= 0.0));
    }
}
