//! Averaging an image over the symmetry group of two orthogonal axes.
//!
//! For a first axis at angle `β` the group is `{id, τ_β, τ_{β+π/2}, -id}`,
//! where `τ_β` reflects across the line through the centre with direction
//! `(cos β, sin β)` and `τ_{β+π/2} = -τ_β`. Each output pixel averages the
//! image at the four group images of its centre. Off-grid samples use
//! bilinear interpolation between pixel centres; group members whose image
//! falls outside the pixel-centre hull are dropped from that pixel's average.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

const ALIGN_TOLERANCE: f64 = 1e-9;

/// Bilinear sample at fractional index `(u, v)`; `None` outside the hull.
fn bilinear(z: &Array2<f64>, u: f64, v: f64) -> Option<f64> {
    let (rows, cols) = z.dim();
    let max_u = (rows - 1) as f64;
    let max_v = (cols - 1) as f64;
    if u < -ALIGN_TOLERANCE || v < -ALIGN_TOLERANCE || u > max_u + ALIGN_TOLERANCE || v > max_v + ALIGN_TOLERANCE {
        return None;
    }
    let u = u.clamp(0.0, max_u);
    let v = v.clamp(0.0, max_v);
    let i0 = (u.floor() as usize).min(rows.saturating_sub(2));
    let j0 = (v.floor() as usize).min(cols.saturating_sub(2));
    let (fu, fv) = (u - i0 as f64, v - j0 as f64);
    if rows == 1 || cols == 1 {
        return Some(z[[i0, j0]]);
    }
    let a = z[[i0, j0]] * (1.0 - fv) + z[[i0, j0 + 1]] * fv;
    let b = z[[i0 + 1, j0]] * (1.0 - fv) + z[[i0 + 1, j0 + 1]] * fv;
    Some(a * (1.0 - fu) + b * fu)
}

/// Reduces an angle to `[0, π)`.
fn reduce(beta: f64) -> f64 {
    let r = beta.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// `Some(true)` for an axis along `x` (β ≡ 0), `Some(false)` for `y`.
fn grid_aligned(beta: f64) -> Option<bool> {
    let b = reduce(beta);
    if b < ALIGN_TOLERANCE || PI - b < ALIGN_TOLERANCE {
        Some(true)
    } else if (b - FRAC_PI_2).abs() < ALIGN_TOLERANCE {
        Some(false)
    } else {
        None
    }
}

/// Group average plus the number of group members used at each pixel.
pub fn symmetrize_with_counts(image: &ImageGrid, beta: f64) -> Result<(ImageGrid, Array2<u8>)> {
    if !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("axis angle must be finite, got {beta}")));
    }
    let z = image.values();
    let m = image.m();
    let mut out = Array2::zeros((m, m));
    let mut counts = Array2::from_elem((m, m), 4u8);

    if grid_aligned(beta).is_some() {
        // Exact pixel permutations; the two reflections are (x,-y) and (-x,y).
        let last = m - 1;
        for i in 0..m {
            for j in 0..m {
                let a = z[[i, j]];
                let b = z[[i, last - j]];
                let c = z[[last - i, j]];
                let d = z[[last - i, last - j]];
                out[[i, j]] = ((a + b) + (c + d)) / 4.0;
            }
        }
        return Ok((image.with_values(out)?, counts));
    }

    let (s2, c2) = (2.0 * reduce(beta)).sin_cos();
    let c = (m as f64 - 1.0) / 2.0;
    for i in 0..m {
        let x = i as f64 - c;
        for j in 0..m {
            let y = j as f64 - c;
            // τ_β(x, y) = (cos2β x + sin2β y, sin2β x − cos2β y).
            let rx = c2 * x + s2 * y;
            let ry = s2 * x - c2 * y;
            let a = Some(z[[i, j]]);
            let b = bilinear(z, c + rx, c + ry);
            let cc = bilinear(z, c - rx, c - ry);
            let d = Some(z[[m - 1 - i, m - 1 - j]]);
            let members = [a, b, cc, d];
            let n = members.iter().filter(|v| v.is_some()).count();
            let pair = |p: Option<f64>, q: Option<f64>| p.unwrap_or(0.0) + q.unwrap_or(0.0);
            out[[i, j]] = (pair(a, b) + pair(cc, d)) / n as f64;
            counts[[i, j]] = n as u8;
        }
    }
    Ok((image.with_values(out)?, counts))
}

/// Averages `image` over the reflections across the axes at `beta` and
/// `beta + π/2` and the half-turn.
pub fn symmetrize(image: &ImageGrid, beta: f64) -> Result<ImageGrid> {
    symmetrize_with_counts(image, beta).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_model::{add_noise, NoiseSpec};

    fn symmetric_image(m: usize) -> ImageGrid {
        let c = (m as f64 - 1.0) / 2.0;
        ImageGrid::from_values(Array2::from_shape_fn((m, m), |(i, j)| {
            let (x, y) = (i as f64 - c, j as f64 - c);
            (-(x * x) / 9.0 - y * y / 4.0).exp() + 0.1 * (x * x * y * y).sqrt()
        }))
        .unwrap()
    }

    #[test]
    fn aligned_symmetric_input_is_unchanged() {
        for m in [9, 10] {
            let img = symmetric_image(m);
            assert_eq!(symmetrize(&img, 0.0).unwrap(), img);
            assert_eq!(symmetrize(&img, FRAC_PI_2).unwrap(), img);
        }
    }

    #[test]
    fn aligned_symmetrization_is_idempotent_and_half_turn_invariant() {
        let noisy = add_noise(&symmetric_image(15), &NoiseSpec::gaussian(0.3, 3)).unwrap();
        let once = symmetrize(&noisy, 0.0).unwrap();
        let twice = symmetrize(&once, 0.0).unwrap();
        let v = once.values();
        for ((i, j), &a) in v.indexed_iter() {
            assert!((a - twice.values()[[i, j]]).abs() < 1e-12);
            assert!((a - v[[14 - i, 14 - j]]).abs() < 1e-10);
        }
    }

    #[test]
    fn generic_pixels_average_four_samples() {
        // Variance of an interior generic pixel drops fourfold.
        let m = 21;
        let reps = 400;
        let (mut s_in, mut s_out) = (0.0, 0.0);
        let mut n = 0.0;
        for r in 0..reps {
            let noise = add_noise(&ImageGrid::zeros(m).unwrap(), &NoiseSpec::gaussian(1.0, r)).unwrap();
            let sym = symmetrize(&noise, 0.0).unwrap();
            for i in 1..m / 2 - 1 {
                for j in 1..m / 2 - 1 {
                    s_in += noise.values()[[i, j]].powi(2);
                    s_out += sym.values()[[i, j]].powi(2);
                    n += 1.0;
                }
            }
        }
        let ratio = (s_in / n) / (s_out / n);
        assert!((ratio - 4.0).abs() < 0.6, "variance ratio {ratio}");
    }

    #[test]
    fn oblique_axis_reflects_rotated_image() {
        // An image symmetric about axes at 30° and 120° is (nearly) a fixed point.
        let m = 41;
        let beta = PI / 6.0;
        let (s, co) = beta.sin_cos();
        let c = 20.0;
        let img = ImageGrid::from_values(Array2::from_shape_fn((m, m), |(i, j)| {
            let (x, y) = (i as f64 - c, j as f64 - c);
            let u = co * x + s * y;
            let v = -s * x + co * y;
            (-(u * u) / 30.0 - v * v / 12.0).exp()
        }))
        .unwrap();
        let (out, counts) = symmetrize_with_counts(&img, beta).unwrap();
        for ((i, j), &a) in out.values().indexed_iter() {
            if (i as f64 - c).hypot(j as f64 - c) < 12.0 {
                assert_eq!(counts[[i, j]], 4);
                assert!((a - img.values()[[i, j]]).abs() < 0.02);
            }
        }
        // Corners lose their reflected pre-images.
        assert!(counts[[0, 0]] < 4);
    }
}
