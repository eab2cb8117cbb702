use thiserror::Error;

/// Errors produced by the estimation and imaging routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inadmissible Zernike index (p={p}, q={q})")]
    InadmissibleIndex { p: i64, q: i64 },

    #[error("point ({x}, {y}) lies outside the closed unit disc")]
    OutsideDisc { x: f64, y: f64 },

    #[error("degenerate contrast: all moments vanish")]
    DegenerateContrast,

    #[error("no angular information: no moment with q > 0 exceeds threshold {threshold:e}")]
    NoAngularInformation { threshold: f64 },

    #[error("noise variance estimate has no pixel with both neighbours inside the disc")]
    EmptyDifferenceSum,

    #[error("flat contrast: curvature {curvature:e} is not positive")]
    FlatContrast { curvature: f64 },

    #[error("negative intensity {value} at pixel ({i}, {j})")]
    NegativeIntensity { value: f64, i: usize, j: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("optimizer did not converge after {iterations} iterations (objective spread {spread:e}, best {best:e})")]
    NoConvergence { iterations: usize, spread: f64, best: f64 },
}

impl Error {
    /// True for failures of the numerical procedure itself, as opposed to bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateContrast
                | Error::NoAngularInformation { .. }
                | Error::FlatContrast { .. }
                | Error::NoConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
