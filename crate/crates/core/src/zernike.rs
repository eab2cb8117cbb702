//! Zernike polynomials on the unit disc and discretised Zernike moments.
//!
//! `V_pq(x, y) = R_pq(ρ) e^{iqθ}` for admissible `(p, q)`: `|q| ≤ p` and
//! `p - |q|` even. The basis is orthogonal with `‖V_pq‖² = π/(p+1)`, so an
//! image expands as `f = Σ n_p⁻¹ A_pq V_pq` with `A_pq = ⟨f, V_pq⟩`.
//!
//! Moments of a sampled image are estimated as `Â_pq = Σ w_pq(x_i, y_j) Z_ij`
//! over pixels whose centre lies in the disc, with either midpoint weights
//! `Δ² V*_pq(x_i, y_j)` or pixel-integrated weights `∬_Π V*_pq` (4×4
//! Gauss-Legendre per pixel).

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Highest radial degree for which coefficient tables can be built.
pub const MAX_DEGREE: u32 = 60;

/// An admissible index pair `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ZernikeIndex {
    p: u32,
    q: i32,
}

impl ZernikeIndex {
    pub fn new(p: u32, q: i32) -> Result<Self> {
        let qa = q.unsigned_abs();
        if qa > p || !(p - qa).is_multiple_of(2) {
            return Err(Error::InadmissibleIndex {
                p: p as i64,
                q: q as i64,
            });
        }
        Ok(Self { p, q })
    }

    #[inline]
    pub fn p(&self) -> u32 {
        self.p
    }

    #[inline]
    pub fn q(&self) -> i32 {
        self.q
    }

    /// `n_p = ‖V_pq‖² = π/(p+1)`.
    #[inline]
    pub fn norm(&self) -> f64 {
        norm_factor(self.p)
    }

    /// The index `(p, -q)`.
    pub fn mirrored(&self) -> Self {
        Self { p: self.p, q: -self.q }
    }

    /// Position of this index in [`admissible_indices`] order.
    #[inline]
    pub fn position(&self) -> usize {
        let p = self.p as usize;
        p * (p + 1) / 2 + ((self.q + self.p as i32) / 2) as usize
    }
}

/// `n_p = π/(p+1)`.
#[inline]
pub fn norm_factor(p: u32) -> f64 {
    PI / (p as f64 + 1.0)
}

/// Number of admissible pairs with `p ≤ n_max`.
pub fn index_count(n_max: u32) -> usize {
    let n = n_max as usize;
    (n + 1) * (n + 2) / 2
}

/// All admissible `(p, q)` with `p ≤ n_max`, ordered by `p` then `q`.
pub fn admissible_indices(n_max: u32) -> Vec<ZernikeIndex> {
    let mut out = Vec::with_capacity(index_count(n_max));
    for p in 0..=n_max {
        let p_i = p as i32;
        for q in (-p_i..=p_i).step_by(2) {
            out.push(ZernikeIndex { p, q });
        }
    }
    out
}

/// Admissible indices with `q ≥ 0`; these determine a real image's moments.
pub fn half_indices(n_max: u32) -> Vec<ZernikeIndex> {
    admissible_indices(n_max).into_iter().filter(|idx| idx.q >= 0).collect()
}

fn binomial(n: u32, k: u32) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // Exact: acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Radial polynomial `R_pq` stored as exact integer coefficients of
/// `ρ^{|q|}, ρ^{|q|+2}, …, ρ^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPoly {
    p: u32,
    q_abs: u32,
    coeffs: Vec<f64>,
}

impl RadialPoly {
    pub fn new(p: u32, q: i32) -> Result<Self> {
        let idx = ZernikeIndex::new(p, q)?;
        if p > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "radial degree {p} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
        let q_abs = idx.q.unsigned_abs();
        let s = (p + q_abs) / 2;
        let d = (p - q_abs) / 2;
        let mut coeffs = vec![0.0; d as usize + 1];
        for l in 0..=d {
            // (p-l)! / (l! (s-l)! (d-l)!) is the multinomial C(p-l, l) C(p-2l, s-l).
            let magnitude = binomial(p - l, l) * binomial(p - 2 * l, s - l);
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[(d - l) as usize] = sign * magnitude as f64;
        }
        Ok(Self { p, q_abs, coeffs })
    }

    pub fn degree(&self) -> u32 {
        self.p
    }

    /// Coefficient of `ρ^{|q| + 2k}`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        let r2 = rho * rho;
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * r2 + c;
        }
        acc * rho.powi(self.q_abs as i32)
    }
}

/// `R_pq(ρ)` for an admissible pair.
pub fn radial_poly(p: u32, q: i32, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("radius {rho} outside [0, 1]")));
    }
    Ok(RadialPoly::new(p, q)?.eval(rho))
}

/// `V_pq(x, y)` on the closed unit disc. The angle at the origin is taken as 0.
pub fn zernike_value(idx: ZernikeIndex, x: f64, y: f64) -> Result<Complex64> {
    if x * x + y * y > 1.0 + 1e-12 {
        return Err(Error::OutsideDisc { x, y });
    }
    let radial = RadialPoly::new(idx.p, idx.q)?;
    Ok(eval_unchecked(&radial, idx.q, x, y))
}

fn eval_unchecked(radial: &RadialPoly, q: i32, x: f64, y: f64) -> Complex64 {
    let rho = x.hypot(y);
    let theta = if rho == 0.0 { 0.0 } else { y.atan2(x) };
    Complex64::from_polar(radial.eval(rho), q as f64 * theta)
}

/// How the per-pixel weights `w_pq(x_i, y_j)` are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `∬_{Π_ij} V*_pq`, by 4×4 Gauss-Legendre over the pixel.
    PixelIntegrated,
    /// `Δ² V*_pq(x_i, y_j)`.
    #[default]
    Midpoint,
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" => Ok(Self::Midpoint),
            "pixel_integrated" | "pixel-integrated" => Ok(Self::PixelIntegrated),
            other => Err(Error::InvalidArgument(format!(
                "unknown weight scheme '{other}' (expected midpoint or pixel_integrated)"
            ))),
        }
    }
}

const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Evaluates `V*_pq` for every `q ≥ 0` index up to `n_max` at one point.
#[derive(Debug, Clone)]
struct HalfBasis {
    indices: Vec<ZernikeIndex>,
    radial: Vec<RadialPoly>,
    n_max: u32,
}

impl HalfBasis {
    fn new(n_max: u32) -> Result<Self> {
        if n_max > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "truncation {n_max} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
        let indices = half_indices(n_max);
        let radial = indices
            .iter()
            .map(|idx| RadialPoly::new(idx.p, idx.q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { indices, radial, n_max })
    }

    /// Adds `scale · V*_pq(x, y)` into `out_re`/`out_im`.
    fn accumulate_conj(&self, x: f64, y: f64, scale: f64, out_re: &mut [f64], out_im: &mut [f64]) {
        let rho = x.hypot(y);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (x / rho, y / rho) };
        let n = self.n_max as usize;
        let mut phase = vec![(1.0, 0.0); n + 1];
        for k in 1..=n {
            let (pc, ps) = phase[k - 1];
            phase[k] = (pc * c - ps * s, pc * s + ps * c);
        }
        for (k, (idx, radial)) in self.indices.iter().zip(&self.radial).enumerate() {
            let r = radial.eval(rho) * scale;
            let (pc, ps) = phase[idx.q as usize];
            out_re[k] += r * pc;
            out_im[k] -= r * ps;
        }
    }

    fn pixel_weights(&self, x: f64, y: f64, delta: f64, scheme: WeightScheme, out_re: &mut [f64], out_im: &mut [f64]) {
        out_re.iter_mut().for_each(|v| *v = 0.0);
        out_im.iter_mut().for_each(|v| *v = 0.0);
        match scheme {
            WeightScheme::Midpoint => {
                self.accumulate_conj(x, y, delta * delta, out_re, out_im);
            }
            WeightScheme::PixelIntegrated => {
                let h = 0.5 * delta;
                for (a, wa) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                    for (b, wb) in GL4_NODES.iter().zip(GL4_WEIGHTS) {
                        self.accumulate_conj(x + h * a, y + h * b, h * h * wa * wb, out_re, out_im);
                    }
                }
            }
        }
    }
}

/// Weight matrix `w_pq(x_i, y_j)` for one index; zero outside the disc.
pub fn quadrature_weights(grid: &ImageGrid, idx: ZernikeIndex, scheme: WeightScheme) -> Result<Array2<Complex64>> {
    let basis = HalfBasis::new(idx.p)?;
    let pos = basis
        .indices
        .iter()
        .position(|k| k.p == idx.p && k.q == idx.q.abs())
        .expect("half basis contains every |q|");
    let n = basis.indices.len();
    let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
    let mut out = Array2::zeros((grid.m(), grid.m()));
    for (i, j) in grid.masked_pixels() {
        basis.pixel_weights(grid.coord(i), grid.coord(j), grid.delta(), scheme, &mut re, &mut im);
        let w = Complex64::new(re[pos], im[pos]);
        out[[i, j]] = if idx.q < 0 { w.conj() } else { w };
    }
    Ok(out)
}

/// Complex Zernike moments for every admissible index up to `n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    n_max: u32,
    delta: f64,
    scheme: WeightScheme,
    #[serde(with = "moment_entries")]
    moments: Vec<Complex64>,
}

impl MomentSet {
    pub fn zeros(n_max: u32, delta: f64, scheme: WeightScheme) -> Self {
        Self {
            n_max,
            delta,
            scheme,
            moments: vec![Complex64::new(0.0, 0.0); index_count(n_max)],
        }
    }

    /// Builds a set from a closure over indices, e.g. for analytically known moments.
    pub fn from_fn(n_max: u32, f: impl Fn(ZernikeIndex) -> Complex64) -> Self {
        let mut ms = Self::zeros(n_max, 0.0, WeightScheme::Midpoint);
        for idx in admissible_indices(n_max) {
            ms.moments[idx.position()] = f(idx);
        }
        ms
    }

    /// Sets `A_pq` and `A_{p,-q} = conj(A_pq)` together.
    pub fn set_real_pair(&mut self, idx: ZernikeIndex, value: Complex64) {
        self.set(idx, value);
        self.set(idx.mirrored(), value.conj());
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    /// `Â_pq`, or zero for `p > n_max`.
    #[inline]
    pub fn get(&self, idx: ZernikeIndex) -> Complex64 {
        if idx.p > self.n_max {
            return Complex64::new(0.0, 0.0);
        }
        self.moments[idx.position()]
    }

    pub fn set(&mut self, idx: ZernikeIndex, value: Complex64) {
        assert!(idx.p <= self.n_max, "index beyond truncation");
        self.moments[idx.position()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ZernikeIndex, Complex64)> + '_ {
        admissible_indices(self.n_max)
            .into_iter()
            .zip(self.moments.iter().copied())
    }

    pub fn values(&self) -> &[Complex64] {
        &self.moments
    }

    /// The same moments restricted to `p ≤ n`.
    pub fn truncated(&self, n: u32) -> Self {
        let n = n.min(self.n_max);
        Self {
            n_max: n,
            delta: self.delta,
            scheme: self.scheme,
            moments: self.moments[..index_count(n)].to_vec(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.moments.iter_mut().for_each(|a| *a *= factor);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.moments.iter().all(|a| a.re == 0.0 && a.im == 0.0)
    }
}

mod moment_entries {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|c| Entry { re: c.re, im: c.im })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| Complex64::new(e.re, e.im)).collect())
    }
}

/// Precomputed weights for repeated moment estimation on one grid size.
///
/// Produces bit-identical results to [`estimate_moments`]; use it when the
/// same geometry is estimated many times (Monte Carlo replicates).
#[derive(Debug, Clone)]
pub struct MomentEstimator {
    m: usize,
    delta: f64,
    n_max: u32,
    scheme: WeightScheme,
    half: Vec<ZernikeIndex>,
    pixels: Vec<(usize, usize)>,
    // [half index][pixel]
    weights_re: Vec<Vec<f64>>,
    weights_im: Vec<Vec<f64>>,
}

impl MomentEstimator {
    pub fn new(m: usize, n_max: u32, scheme: WeightScheme) -> Result<Self> {
        let grid = ImageGrid::zeros(m)?;
        let basis = HalfBasis::new(n_max)?;
        let pixels: Vec<_> = grid.masked_pixels().collect();
        let nh = basis.indices.len();
        let mut weights_re = vec![Vec::with_capacity(pixels.len()); nh];
        let mut weights_im = vec![Vec::with_capacity(pixels.len()); nh];
        let (mut re, mut im) = (vec![0.0; nh], vec![0.0; nh]);
        for &(i, j) in &pixels {
            basis.pixel_weights(grid.coord(i), grid.coord(j), grid.delta(), scheme, &mut re, &mut im);
            for k in 0..nh {
                weights_re[k].push(re[k]);
                weights_im[k].push(im[k]);
            }
        }
        Ok(Self {
            m,
            delta: grid.delta(),
            n_max,
            scheme,
            half: basis.indices,
            pixels,
            weights_re,
            weights_im,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn estimate(&self, grid: &ImageGrid) -> Result<MomentSet> {
        if grid.m() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "estimator built for m={}, grid has m={}",
                self.m,
                grid.m()
            )));
        }
        let values = grid.values();
        let z: Vec<f64> = self.pixels.iter().map(|&(i, j)| values[[i, j]]).collect();
        let mut ms = MomentSet::zeros(self.n_max, self.delta, self.scheme);
        for (k, idx) in self.half.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for ((&wr, &wi), &zv) in self.weights_re[k].iter().zip(&self.weights_im[k]).zip(&z) {
                re += wr * zv;
                im += wi * zv;
            }
            ms.set_real_pair(*idx, Complex64::new(re, im));
        }
        Ok(ms)
    }
}

/// `Â_pq = Σ_{(x_i, y_j) ∈ D} w_pq(x_i, y_j) Z_ij` for all admissible `p ≤ n_max`.
///
/// Only `q ≥ 0` sums are formed; `Â_{p,-q}` is set to `conj(Â_pq)`, which is
/// exact for real samples.
pub fn estimate_moments(grid: &ImageGrid, n_max: u32, scheme: WeightScheme) -> Result<MomentSet> {
    let basis = HalfBasis::new(n_max)?;
    let nh = basis.indices.len();
    let (mut wr, mut wi) = (vec![0.0; nh], vec![0.0; nh]);
    let (mut acc_re, mut acc_im) = (vec![0.0; nh], vec![0.0; nh]);
    let values = grid.values();
    for (i, j) in grid.masked_pixels() {
        basis.pixel_weights(grid.coord(i), grid.coord(j), grid.delta(), scheme, &mut wr, &mut wi);
        let z = values[[i, j]];
        for k in 0..nh {
            acc_re[k] += wr[k] * z;
            acc_im[k] += wi[k] * z;
        }
    }
    let mut ms = MomentSet::zeros(n_max, grid.delta(), scheme);
    for (k, idx) in basis.indices.iter().enumerate() {
        ms.set_real_pair(*idx, Complex64::new(acc_re[k], acc_im[k]));
    }
    Ok(ms)
}

/// Truncated expansion `Σ n_p⁻¹ Â_pq V_pq` at the grid's in-disc pixel centres.
/// Pixels outside the disc are zero; the imaginary part is discarded.
pub fn reconstruct(ms: &MomentSet, grid: &ImageGrid) -> Result<Array2<f64>> {
    let entries: Vec<(ZernikeIndex, Complex64, RadialPoly)> = ms
        .iter()
        .filter(|(_, a)| a.re != 0.0 || a.im != 0.0)
        .map(|(idx, a)| Ok((idx, a / idx.norm(), RadialPoly::new(idx.p, idx.q)?)))
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((grid.m(), grid.m()));
    for (i, j) in grid.masked_pixels() {
        let (x, y) = (grid.coord(i), grid.coord(j));
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, a, radial) in &entries {
            acc += a * eval_unchecked(radial, idx.q, x, y);
        }
        out[[i, j]] = acc.re;
    }
    Ok(out)
}

/// `Σ n_p⁻¹ |Â_pq|²`.
pub fn parseval_norm(ms: &MomentSet) -> f64 {
    ms.iter().map(|(idx, a)| a.norm_sqr() / idx.norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn admissible_small_cases() {
        assert_eq!(admissible_indices(0), vec![ZernikeIndex { p: 0, q: 0 }]);
        let got: Vec<(u32, i32)> = admissible_indices(2).iter().map(|k| (k.p, k.q)).collect();
        assert_eq!(got, vec![(0, 0), (1, -1), (1, 1), (2, -2), (2, 0), (2, 2)]);
    }

    #[test]
    fn admissible_count_matches_brute_force() {
        for n in 0..=12u32 {
            let mut brute = 0;
            for p in 0..=n as i32 {
                for q in -20i32..=20 {
                    if q.abs() <= p && (p - q.abs()) % 2 == 0 {
                        brute += 1;
                    }
                }
            }
            assert_eq!(admissible_indices(n).len(), brute);
            assert_eq!(index_count(n), brute);
        }
        assert_eq!(admissible_indices(4).len(), 15);
    }

    #[test]
    fn positions_follow_enumeration_order() {
        for (k, idx) in admissible_indices(9).iter().enumerate() {
            assert_eq!(idx.position(), k);
        }
    }

    #[test]
    fn inadmissible_rejected() {
        assert!(ZernikeIndex::new(2, 1).is_err());
        assert!(ZernikeIndex::new(1, 3).is_err());
        assert!(matches!(
            radial_poly(3, 0, 0.5),
            Err(Error::InadmissibleIndex { p: 3, q: 0 })
        ));
    }

    /// Direct factorial sum in f64, as an independent check of the integer tables.
    fn radial_by_factorials(p: u32, q: i32, rho: f64) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        let qa = q.unsigned_abs();
        (0..=(p - qa) / 2)
            .map(|l| {
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact(p - l) * rho.powi((p - 2 * l) as i32)
                    / (fact(l) * fact((p + qa) / 2 - l) * fact((p - qa) / 2 - l))
            })
            .sum()
    }

    #[test]
    fn radial_examples() {
        for rho in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(radial_poly(0, 0, rho).unwrap(), 1.0);
        }
        assert_eq!(radial_poly(1, 1, 0.5).unwrap(), 0.5);
        assert_eq!(radial_poly(2, 0, 1.0).unwrap(), 1.0);
        assert!((radial_poly(2, 0, 0.3).unwrap() - (2.0 * 0.09 - 1.0)).abs() < 1e-15);
        assert!((radial_poly(4, 0, 0.6).unwrap() - (6.0 * 0.6f64.powi(4) - 6.0 * 0.36 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn radial_matches_factorial_sum() {
        for idx in admissible_indices(16) {
            for rho in [0.0, 0.1, 0.45, 0.9, 1.0] {
                let a = radial_poly(idx.p, idx.q, rho).unwrap();
                let b = radial_by_factorials(idx.p, idx.q, rho);
                assert!((a - b).abs() < 1e-9, "{idx:?} rho={rho}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn radial_at_one_is_one() {
        for idx in admissible_indices(30) {
            let v = radial_poly(idx.p, idx.q, 1.0).unwrap();
            let tol = if idx.p <= 20 { 1e-12 } else { 1e-6 };
            assert!((v - 1.0).abs() < tol, "{idx:?}: {v}");
        }
    }

    #[test]
    fn radial_vanishes_at_origin_for_nonzero_q() {
        for idx in admissible_indices(12).into_iter().filter(|k| k.q != 0) {
            assert_eq!(radial_poly(idx.p, idx.q, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn zernike_value_examples() {
        let v = zernike_value(ZernikeIndex::new(0, 0).unwrap(), 0.3, 0.4).unwrap();
        assert_eq!(v, Complex64::new(1.0, 0.0));
        let v = zernike_value(ZernikeIndex::new(1, 1).unwrap(), 0.0, 0.5).unwrap();
        assert!((v - Complex64::new(0.0, 0.5)).norm() < 1e-16);
        let a = zernike_value(ZernikeIndex::new(2, 2).unwrap(), 0.2, -0.7).unwrap();
        let b = zernike_value(ZernikeIndex::new(2, -2).unwrap(), 0.2, -0.7).unwrap();
        assert!((a.conj() - b).norm() < 1e-15);
        assert_eq!(
            zernike_value(ZernikeIndex::new(3, 1).unwrap(), 0.0, 0.0).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        assert!(matches!(
            zernike_value(ZernikeIndex::new(0, 0).unwrap(), 0.8, 0.8),
            Err(Error::OutsideDisc { .. })
        ));
    }

    #[test]
    fn midpoint_weights_examples() {
        let g = ImageGrid::zeros(11).unwrap();
        let w00 = quadrature_weights(&g, ZernikeIndex::new(0, 0).unwrap(), WeightScheme::Midpoint).unwrap();
        let d2 = g.delta() * g.delta();
        for (i, j) in g.masked_pixels() {
            assert_eq!(w00[[i, j]], Complex64::new(d2, 0.0));
        }
        assert_eq!(w00[[0, 0]], Complex64::new(0.0, 0.0));
        let w11 = quadrature_weights(&g, ZernikeIndex::new(1, 1).unwrap(), WeightScheme::Midpoint).unwrap();
        assert_eq!(w11[[5, 5]], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn pixel_integrated_area_sum_approaches_pi() {
        let mut errors = vec![];
        for m in [51, 101, 201] {
            let g = ImageGrid::zeros(m).unwrap();
            let w = quadrature_weights(&g, ZernikeIndex::new(0, 0).unwrap(), WeightScheme::PixelIntegrated).unwrap();
            let area: f64 = w.iter().map(|c| c.re).sum();
            let err = (area - PI).abs();
            // Lattice-point geometric error is O(Δ).
            assert!(err < 2.0 * g.delta(), "m={m}: area {area}");
            errors.push(err);
        }
        assert!(errors[2] < errors[0]);
    }

    #[test]
    fn pixel_integrated_is_exact_for_interior_polynomials() {
        // 4×4 Gauss-Legendre integrates bivariate polynomials of degree ≤ 7 per axis exactly.
        let g = ImageGrid::zeros(21).unwrap();
        let idx = ZernikeIndex::new(2, 2).unwrap();
        let w = quadrature_weights(&g, idx, WeightScheme::PixelIntegrated).unwrap();
        let (i, j) = (12, 7);
        let (x, y, h) = (g.coord(i), g.coord(j), g.delta() / 2.0);
        // conj V_22 = (x - iy)², integrated over the square.
        let int = |a: f64, b: f64, c: f64, d: f64| {
            let re = ((b.powi(3) - a.powi(3)) / 3.0) * (d - c) - (b - a) * ((d.powi(3) - c.powi(3)) / 3.0);
            let im = -2.0 * ((b * b - a * a) / 2.0) * ((d * d - c * c) / 2.0);
            Complex64::new(re, im)
        };
        let exact = int(x - h, x + h, y - h, y + h);
        assert!((w[[i, j]] - exact).norm() < 1e-17);
    }

    #[test]
    fn estimator_matches_streaming_bitwise() {
        let g = ImageGrid::from_fn(37, |x, y| (3.0 * x).sin() + y * y * x - 0.2).unwrap();
        for scheme in [WeightScheme::Midpoint, WeightScheme::PixelIntegrated] {
            let a = estimate_moments(&g, 6, scheme).unwrap();
            let b = MomentEstimator::new(37, 6, scheme).unwrap().estimate(&g).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn constant_image_moments() {
        let g = ImageGrid::from_fn(201, |_, _| 1.0).unwrap();
        let ms = estimate_moments(&g, 4, WeightScheme::PixelIntegrated).unwrap();
        for (idx, a) in ms.iter() {
            if idx.p == 0 {
                assert!((a.re - PI).abs() < 0.02, "{a}");
            } else {
                assert!(a.norm() < 0.02, "{idx:?}: {a}");
            }
        }
    }

    #[test]
    fn reconstruct_constant() {
        let g = ImageGrid::zeros(15).unwrap();
        let mut ms = MomentSet::zeros(3, g.delta(), WeightScheme::Midpoint);
        ms.set(ZernikeIndex::new(0, 0).unwrap(), Complex64::new(PI, 0.0));
        let r = reconstruct(&ms, &g).unwrap();
        for (i, j) in g.masked_pixels() {
            assert!((r[[i, j]] - 1.0).abs() < 1e-15);
        }
        assert_eq!(r[[0, 0]], 0.0);
    }

    #[test]
    fn parseval_examples() {
        let mut ms = MomentSet::zeros(2, 0.1, WeightScheme::Midpoint);
        assert_eq!(parseval_norm(&ms), 0.0);
        ms.set(ZernikeIndex::new(0, 0).unwrap(), Complex64::new(PI, 0.0));
        assert!((parseval_norm(&ms) - PI).abs() < 1e-15);
    }

    #[test]
    fn truncation_keeps_prefix() {
        let ms = MomentSet::from_fn(5, |idx| Complex64::new(idx.p as f64, idx.q as f64));
        let t = ms.truncated(3);
        assert_eq!(t.len(), index_count(3));
        for (idx, a) in t.iter() {
            assert_eq!(a, ms.get(idx));
        }
    }

    #[test]
    fn moment_set_serde_round_trip() {
        let ms = MomentSet::from_fn(3, |idx| Complex64::new(idx.p as f64 * 0.1, -(idx.q as f64)));
        let json = serde_json::to_string(&ms).unwrap();
        let back: MomentSet = serde_json::from_str(&json).unwrap();
        assert_eq!(ms, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn moments_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s1 in 0u64..1000, s2 in 0u64..1000) {
            let z1 = ImageGrid::from_fn(23, |x, y| ((s1 as f64) * 0.01 + 2.0 * x - y).sin()).unwrap();
            let z2 = ImageGrid::from_fn(23, |x, y| ((s2 as f64) * 0.01 * y + x * x).cos()).unwrap();
            let mix = z1.with_values(z1.values() * a + z2.values() * b).unwrap();
            let m1 = estimate_moments(&z1, 5, WeightScheme::Midpoint).unwrap();
            let m2 = estimate_moments(&z2, 5, WeightScheme::Midpoint).unwrap();
            let mm = estimate_moments(&mix, 5, WeightScheme::Midpoint).unwrap();
            for ((x, y), z) in m1.values().iter().zip(m2.values()).zip(mm.values()) {
                prop_assert!((x * a + y * b - z).norm() < 1e-12);
            }
        }

        #[test]
        fn real_images_have_conjugate_symmetric_moments(seed in 0u64..10_000) {
            let g = ImageGrid::from_fn(17, |x, y| ((seed % 97) as f64 * x + y * 3.1).sin() + x * y).unwrap();
            let ms = estimate_moments(&g, 6, WeightScheme::PixelIntegrated).unwrap();
            for (idx, a) in ms.iter() {
                prop_assert_eq!(ms.get(idx.mirrored()), a.conj());
            }
        }
    }
}
