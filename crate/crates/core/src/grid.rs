//! Square pixel grids over `[-1, 1]²` with the inscribed unit disc as mask.
//!
//! A grid with `m` pixels per side has edge width `Δ = 2/m` and pixel centres
//! `x_i = -1 + (i + ½)Δ` for `i = 0..m`, so `x_i = -x_{m-1-i}`. Samples are
//! stored as `values[[i, j]] = Z` at `(x_i, y_j)`: the first axis runs along
//! `x`, the second along `y`.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    m: usize,
    delta: f64,
    values: Array2<f64>,
    mask: Array2<bool>,
}

/// Centre coordinate of pixel `k` on a grid of `m` pixels spanning `[-1, 1]`.
#[inline]
pub fn pixel_center(m: usize, k: usize) -> f64 {
    // (2k + 1 - m)/m is exactly antisymmetric under k -> m - 1 - k.
    (2.0 * k as f64 + 1.0 - m as f64) / m as f64
}

fn disc_mask(m: usize) -> Array2<bool> {
    Array2::from_shape_fn((m, m), |(i, j)| {
        let x = pixel_center(m, i);
        let y = pixel_center(m, j);
        x * x + y * y <= 1.0
    })
}

impl ImageGrid {
    /// All-zero grid with `m` pixels per side.
    pub fn zeros(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid needs at least one pixel".into()));
        }
        Ok(Self {
            m,
            delta: 2.0 / m as f64,
            values: Array2::zeros((m, m)),
            mask: disc_mask(m),
        })
    }

    /// Wraps a square sample matrix.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch(format!(
                "image must be square, got {rows}x{cols}"
            )));
        }
        if rows == 0 {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().to_owned()
        };
        Ok(Self {
            m: rows,
            delta: 2.0 / rows as f64,
            mask: disc_mask(rows),
            values,
        })
    }

    /// Samples `f` at pixel centres inside the disc; pixels outside are zero.
    pub fn from_fn(m: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut grid = Self::zeros(m)?;
        for i in 0..m {
            let x = pixel_center(m, i);
            for j in 0..m {
                if grid.mask[[i, j]] {
                    grid.values[[i, j]] = f(x, pixel_center(m, j));
                }
            }
        }
        Ok(grid)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    #[inline]
    pub fn coord(&self, k: usize) -> f64 {
        pixel_center(self.m, k)
    }

    #[inline]
    pub fn is_inside(&self, i: usize, j: usize) -> bool {
        self.mask[[i, j]]
    }

    /// Indices of pixels whose centre lies in the disc, in row-major order.
    pub fn masked_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mask
            .indexed_iter()
            .filter_map(|(ij, &inside)| inside.then_some(ij))
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Largest sample inside the disc.
    pub fn peak(&self) -> f64 {
        self.masked_pixels()
            .map(|(i, j)| self.values[[i, j]])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest sample over the whole square.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    /// Same grid with `f` applied to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            m: self.m,
            delta: self.delta,
            values: self.values.mapv(f),
            mask: self.mask.clone(),
        }
    }

    /// Same geometry, new samples.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (self.m, self.m) {
            return Err(Error::DimensionMismatch(format!(
                "expected {0}x{0} samples, got {1:?}",
                self.m,
                values.dim()
            )));
        }
        Ok(Self {
            m: self.m,
            delta: self.delta,
            values,
            mask: self.mask.clone(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centres_are_symmetric() {
        for m in [1, 2, 7, 50, 51] {
            for k in 0..m {
                assert_eq!(pixel_center(m, k), -pixel_center(m, m - 1 - k));
            }
        }
    }

    #[test]
    fn delta_is_two_over_m() {
        let g = ImageGrid::zeros(101).unwrap();
        assert_eq!(g.delta(), 2.0 / 101.0);
        assert_eq!(g.coord(50), 0.0);
    }

    #[test]
    fn mask_matches_disc() {
        let g = ImageGrid::zeros(40).unwrap();
        for ((i, j), &inside) in g.mask().indexed_iter() {
            let (x, y) = (g.coord(i), g.coord(j));
            assert_eq!(inside, x * x + y * y <= 1.0);
        }
        // The mask is invariant under the dihedral symmetries of the square.
        let m = g.m();
        for (i, j) in g.masked_pixels() {
            assert!(g.is_inside(j, i));
            assert!(g.is_inside(m - 1 - i, j));
            assert!(g.is_inside(i, m - 1 - j));
        }
    }

    #[test]
    fn rejects_non_square() {
        let err = ImageGrid::from_values(Array2::zeros((3, 4))).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn from_fn_zero_outside_disc() {
        let g = ImageGrid::from_fn(9, |_, _| 1.0).unwrap();
        assert_eq!(g.sum(), g.masked_count() as f64);
        assert_eq!(g.values()[[0, 0]], 0.0);
    }
}
