//! PSF calibration: bead simulation, parametric and nonparametric PSF
//! estimates, symmetrisation over estimated axes, convolution and
//! Richardson–Lucy deconvolution.

pub mod deconv;
pub mod fit;
pub mod kernel;
pub mod phantom;
pub mod symmetrize;

pub use deconv::{
    optimal_iterate_distance, richardson_lucy, richardson_lucy_from, richardson_lucy_with, BestIterate, DistanceMetric,
    RlIterate, RlSummary,
};
pub use fit::{
    estimate_psf, fit_parametric_psf, profile_log_likelihood, raw_psf, symmetrized_psf, PsfKind, PsfModel,
    SymmetrizeOptions,
};
pub use kernel::{
    bead_intensity, convolve, correlate, fwhm_to_sigma, gaussian_psf, normalized_kernel, simulate_bead_image, BeadSpec,
};
pub use phantom::{phantom, scaled_phantom};
pub use symmetrize::{symmetrize, symmetrize_with_counts};
