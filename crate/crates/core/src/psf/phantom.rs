//! A procedural cell-like test object for deconvolution benchmarks.
//!
//! 128×128 pixels (an 8.2 μm field at ≈64 nm per pixel): an elliptical body,
//! a brighter rim just inside its boundary and three interior blobs of
//! different sizes. Edges are antialiased by 4×4 supersampling. Everything is
//! at least 24 pixels from the image border, so blurring with kernels of
//! radius up to 12 pixels never reaches the border.

use ndarray::Array2;

use super::kernel::convolve;
use crate::error::{Error, Result};
use crate::grid::ImageGrid;

pub const PHANTOM_SIZE: usize = 128;
/// Minimum distance, in pixels, from the object's support to the border.
pub const PHANTOM_MARGIN: usize = 24;

const BODY_AXES: (f64, f64) = (38.0, 31.0);
const BODY_ANGLE: f64 = 0.35;
const RIM_START: f64 = 0.86;
/// `(x, y, radius, added intensity)` in pixels from the centre.
const BLOBS: [(f64, f64, f64, f64); 3] = [(-9.0, 7.0, 10.0, 1.6), (15.0, -8.0, 5.0, 2.6), (5.0, 17.0, 3.5, 2.2)];

fn intensity(x: f64, y: f64) -> f64 {
    let (s, c) = BODY_ANGLE.sin_cos();
    let u = (c * x + s * y) / BODY_AXES.0;
    let v = (-s * x + c * y) / BODY_AXES.1;
    let r = (u * u + v * v).sqrt();
    if r > 1.0 {
        return 0.0;
    }
    let mut value = 1.0;
    if r >= RIM_START {
        value += 1.5;
    }
    for &(bx, by, br, add) in &BLOBS {
        if (x - bx).hypot(y - by) <= br {
            value += add;
        }
    }
    value
}

/// The unscaled phantom (body level 1).
pub fn phantom() -> ImageGrid {
    const SUB: usize = 4;
    let c = (PHANTOM_SIZE as f64 - 1.0) / 2.0;
    let values = Array2::from_shape_fn((PHANTOM_SIZE, PHANTOM_SIZE), |(i, j)| {
        let mut acc = 0.0;
        for a in 0..SUB {
            let x = i as f64 - c - 0.5 + (a as f64 + 0.5) / SUB as f64;
            for b in 0..SUB {
                let y = j as f64 - c - 0.5 + (b as f64 + 0.5) / SUB as f64;
                acc += intensity(x, y);
            }
        }
        acc / (SUB * SUB) as f64
    });
    ImageGrid::from_values(values).expect("square phantom")
}

/// The phantom scaled so the blurred image `k ∗ γ` peaks at `peak`; returns
/// `(γ, k ∗ γ)`.
pub fn scaled_phantom(kernel: &ImageGrid, peak: f64) -> Result<(ImageGrid, ImageGrid)> {
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be positive, got {peak}")));
    }
    let base = phantom();
    let blurred = convolve(&base, kernel)?;
    let s = peak / blurred.max_value();
    Ok((base.scaled(s), blurred.scaled(s)))
}
