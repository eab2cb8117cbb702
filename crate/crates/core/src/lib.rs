//! Estimation of reflection-symmetry axes in noisy images from truncated
//! Zernike expansions, and its use for point-spread-function calibration.
//!
//! * [`zernike`]: basis polynomials, quadrature weights, moment estimation and
//!   reconstruction.
//! * [`symmetry`]: the contrast function, its minimiser, noise variance,
//!   confidence intervals and the identifiability diagnostic.
//! * [`image_model`]: the standard test targets, SNR scaling, Gaussian and
//!   Poisson noise, and the Anscombe transform.
//! * [`psf`]: bead simulation, parametric PSF fits, symmetrisation,
//!   convolution and Richardson-Lucy deconvolution.
//! * [`experiments`]: Monte Carlo drivers and their reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod grid;
pub mod image_model;
pub mod psf;
pub mod symmetry;
pub mod zernike;

pub use error::{Error, Result};
pub use grid::ImageGrid;
pub use symmetry::{estimate_axis, ContrastSpec, SymmetryEstimate};
pub use zernike::{estimate_moments, MomentSet, WeightScheme, ZernikeIndex};
