//! 2D Savitzky-Golay smoothing.
//!
//! Each output value is the (0,0)-derivative of the local bivariate
//! least-squares polynomial fit (tensor basis, per-axis order) over the
//! window. Near the edges the window is shifted flush to the boundary and the
//! fit is evaluated at the point's own offset instead of padding, so
//! polynomial reproduction holds everywhere, not just in the interior.
//!
//! With a tensor basis on a product grid the 2D least-squares projector
//! factorizes into two 1D passes, which is how the filter is applied here.

use super::DenoiseError;
use crate::grid::Field;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Window and polynomial order per axis (x, t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavgolSpec {
    pub window: (usize, usize),
    pub polyorder: (usize, usize),
}

impl SavgolSpec {
    pub fn square(window: usize, polyorder: usize) -> Self {
        Self {
            window: (window, window),
            polyorder: (polyorder, polyorder),
        }
    }
}

fn check_axis(window: usize, order: usize, len: usize) -> Result<(), DenoiseError> {
    if window < 3 || window % 2 == 0 || order >= window || window > len {
        return Err(DenoiseError::BadWindow { window, order, len });
    }
    Ok(())
}

/// 1D filter weights for a window of length `w`, polynomial order `o`,
/// evaluated at offset `e` (0-based position inside the window).
fn weights_1d(w: usize, o: usize, e: usize) -> Vec<f64> {
    // Positions scaled to [-1, 1] for conditioning; the projector is
    // invariant under affine reparameterization of the basis.
    let half = (w - 1) as f64 / 2.0;
    let xs: Vec<f64> = (0..w).map(|r| (r as f64 - e as f64) / half).collect();
    let basis = DMatrix::from_fn(w, o + 1, |r, k| xs[r].powi(k as i32));
    let gram = basis.transpose() * &basis;
    let mut rhs = DVector::zeros(o + 1);
    rhs[0] = 1.0; // value of the fit at offset e, where all powers but x^0 vanish
    let sol = gram
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| {
            gram.clone()
                .lu()
                .solve(&rhs)
                .expect("savgol normal equations are nonsingular for order < window")
        });
    (basis * sol).iter().copied().collect()
}

/// Weights for every output position along an axis of length `n`:
/// `(window_start, weights)` per index.
fn axis_plan(n: usize, w: usize, o: usize) -> Vec<(usize, Vec<f64>)> {
    let half = w / 2;
    let interior = weights_1d(w, o, half);
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - w);
            let offset = i - start;
            if offset == half {
                (start, interior.clone())
            } else {
                (start, weights_1d(w, o, offset))
            }
        })
        .collect()
}

/// Applies the separable 2D filter to a raw matrix (rows = x, cols = t).
pub fn smooth_matrix(values: &Array2<f64>, spec: &SavgolSpec) -> Result<Array2<f64>, DenoiseError> {
    let (nx, nt) = values.dim();
    check_axis(spec.window.0, spec.polyorder.0, nx)?;
    check_axis(spec.window.1, spec.polyorder.1, nt)?;
    let plan_x = axis_plan(nx, spec.window.0, spec.polyorder.0);
    let plan_t = axis_plan(nt, spec.window.1, spec.polyorder.1);

    // Pass 1: along x (down each column).
    let mut tmp = Array2::zeros((nx, nt));
    for i in 0..nx {
        let (start, wts) = &plan_x[i];
        for j in 0..nt {
            let mut acc = 0.0;
            for (k, &c) in wts.iter().enumerate() {
                acc += c * values[[start + k, j]];
            }
            tmp[[i, j]] = acc;
        }
    }
    // Pass 2: along t (across each row).
    let mut out = Array2::zeros((nx, nt));
    for j in 0..nt {
        let (start, wts) = &plan_t[j];
        for i in 0..nx {
            let mut acc = 0.0;
            for (k, &c) in wts.iter().enumerate() {
                acc += c * tmp[[i, start + k]];
            }
            out[[i, j]] = acc;
        }
    }
    Ok(out)
}

/// Smooths a field with a 2D Savitzky-Golay filter.
pub fn savgol2d(field: &Field, spec: &SavgolSpec) -> Result<Field, DenoiseError> {
    let values = smooth_matrix(&field.values, spec)?;
    Ok(Field::new(field.x_axis, field.t_axis, values)?)
}
