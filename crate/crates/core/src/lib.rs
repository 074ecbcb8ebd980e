//! Data-driven discovery of governing PDEs from noisy space-time observations.
//!
//! The pipeline implemented by this crate:
//!
//! 1. [`grid`] — sampled fields on rectangular space-time grids, noise injection,
//!    binary field files.
//! 2. [`datagen`] — reference solutions of canonical 1D PDEs (Burgers, KdV,
//!    Kuramoto-Sivashinsky) via a periodic pseudo-spectral ETDRK4 integrator.
//! 3. [`denoise`] — regularized K-SVD dictionary learning with OMP sparse coding,
//!    2D Savitzky-Golay filtering, and truncated-SVD reconstruction.
//! 4. [`weaklib`] — weak-form candidate libraries: candidates integrated against a
//!    smooth compactly-supported weight over random subdomains.
//! 5. [`subset`] — best-subset least squares (exhaustive and FROLS) over the library.
//! 6. [`bayes`] — closed-form Gaussian posteriors per support size and the
//!    coefficient-of-variation uncertainty.
//! 7. [`select`] — BIC / uncertainty-penalized BIC scoring and the adaptive
//!    penalty-weight tuner.
//! 8. [`evaluate`] — discovery-quality metrics (percentage coefficient error,
//!    BIC-reduction).

pub mod bayes;
pub mod datagen;
pub mod denoise;
pub mod evaluate;
pub mod grid;
pub mod select;
pub mod subset;
pub mod weaklib;

pub use grid::{Axis, Field, NoiseSpec};
pub use weaklib::{CandidateTerm, SubdomainSpec, WeakLibrary};
