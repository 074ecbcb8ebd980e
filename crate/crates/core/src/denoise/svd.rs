//! Truncated-SVD low-rank reconstruction.

use super::DenoiseError;
use nalgebra::DMatrix;
use ndarray::Array2;

/// Best rank-`r` approximation in the Frobenius norm (Eckart-Young).
pub fn svd_truncate(matrix: &Array2<f64>, rank: usize) -> Result<Array2<f64>, DenoiseError> {
    let (rows, cols) = matrix.dim();
    if rank == 0 || rank > rows.min(cols) {
        return Err(DenoiseError::InvalidParam(format!(
            "rank {rank} outside 1..={}",
            rows.min(cols)
        )));
    }
    let m = DMatrix::from_row_iterator(rows, cols, matrix.iter().copied());
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    // Singular values come back sorted in descending order.
    let mut out = DMatrix::zeros(rows, cols);
    for k in 0..rank {
        let s = svd.singular_values[k];
        let uk = u.column(k);
        let vk = vt.row(k);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] += s * uk[i] * vk[j];
            }
        }
    }
    Ok(Array2::from_shape_fn((rows, cols), |(i, j)| out[(i, j)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fro(m: &Array2<f64>) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn full_rank_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Array2::from_shape_fn((12, 7), |_| rng.random::<f64>() - 0.5);
        let out = svd_truncate(&m, 7).unwrap();
        let err = fro(&(&out - &m)) / fro(&m);
        assert!(err < 1e-10, "relative error {err}");
    }

    /// Rank-1 matrix plus a perturbation of Frobenius norm delta: the rank-1
    /// truncation must land within 2*delta of the rank-1 part.
    #[test]
    fn near_rank_one_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u: Vec<f64> = (0..20).map(|_| rng.random::<f64>() - 0.5).collect();
        let v: Vec<f64> = (0..15).map(|_| rng.random::<f64>() - 0.5).collect();
        let base = Array2::from_shape_fn((20, 15), |(i, j)| u[i] * v[j]);
        let mut noise = Array2::from_shape_fn((20, 15), |_| rng.random::<f64>() - 0.5);
        let delta = 1e-3;
        noise *= delta / fro(&noise);
        let perturbed = &base + &noise;
        let out = svd_truncate(&perturbed, 1).unwrap();
        assert!(fro(&(&out - &base)) <= 2.0 * delta);
    }

    #[test]
    fn output_rank_does_not_exceed_request() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let m = Array2::from_shape_fn((10, 10), |_| rng.random::<f64>());
        let out = svd_truncate(&m, 3).unwrap();
        let dm = nalgebra::DMatrix::from_row_iterator(10, 10, out.iter().copied());
        let sv = dm.svd(false, false).singular_values;
        for k in 3..10 {
            assert!(sv[k] < 1e-10 * sv[0], "singular value {k} = {}", sv[k]);
        }
    }

    #[test]
    fn invalid_rank_is_rejected() {
        let m = Array2::<f64>::zeros((4, 6));
        assert!(svd_truncate(&m, 0).is_err());
        assert!(svd_truncate(&m, 5).is_err());
    }
}
