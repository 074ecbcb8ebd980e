//! Observation-noise reduction ahead of library construction.
//!
//! Three interchangeable routes: regularized K-SVD dictionary learning with
//! OMP sparse coding ([`ksvd`]), 2D Savitzky-Golay filtering ([`savgol`]), and
//! truncated-SVD reconstruction ([`svd`]).

pub mod ksvd;
pub mod omp;
pub mod patches;
pub mod savgol;
pub mod svd;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("patch size {p} exceeds grid dimension {dim}")]
    PatchTooLarge { p: usize, dim: usize },
    #[error("patch stack inconsistent: {0}")]
    BadStack(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("savgol window {window} with polyorder {order} is invalid for axis of length {len}")]
    BadWindow {
        window: usize,
        order: usize,
        len: usize,
    },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

pub use ksvd::{rksvd_denoise, Dictionary, RksvdOutcome, RksvdParams};
pub use omp::{omp, OmpOutcome};
pub use patches::{from_patches, to_patches, PatchStack};
pub use savgol::{savgol2d, SavgolSpec};
pub use svd::svd_truncate;
