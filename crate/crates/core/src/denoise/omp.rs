//! Orthogonal matching pursuit sparse coding.

use super::DenoiseError;
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

/// Sparse code plus the columns where a dependent atom had to be dropped
/// (the least-squares fit on the remaining support is the minimum-norm
/// resolution of the degeneracy).
#[derive(Debug, Clone)]
pub struct OmpOutcome {
    pub code: Array2<f64>,
    pub degenerate_columns: Vec<usize>,
}

/// Greedy sparse coding: per signal, repeatedly select the atom with maximum
/// absolute correlation to the current residual, then refit by least squares
/// on the selected support. Atoms must be unit-norm.
pub fn omp(
    atoms: &Array2<f64>,
    signals: &Array2<f64>,
    sparsity: usize,
) -> Result<OmpOutcome, DenoiseError> {
    let (dim, n_atoms) = atoms.dim();
    let (sdim, n_signals) = signals.dim();
    if sdim != dim {
        return Err(DenoiseError::InvalidParam(format!(
            "signal dimension {sdim} does not match atom dimension {dim}"
        )));
    }
    if sparsity == 0 || sparsity > n_atoms {
        return Err(DenoiseError::InvalidParam(format!(
            "sparsity {sparsity} outside 1..={n_atoms}"
        )));
    }
    for j in 0..n_atoms {
        let n = norm(atoms.column(j));
        if (n - 1.0).abs() > 1e-6 {
            return Err(DenoiseError::InvalidParam(format!(
                "atom {j} has norm {n}, expected 1"
            )));
        }
    }

    let results: Vec<(Vec<(usize, f64)>, bool)> = (0..n_signals)
        .into_par_iter()
        .map(|l| encode_one(atoms, signals.column(l), sparsity))
        .collect();

    let mut code = Array2::zeros((n_atoms, n_signals));
    let mut degenerate = Vec::new();
    for (l, (entries, flag)) in results.into_iter().enumerate() {
        for (j, v) in entries {
            code[[j, l]] = v;
        }
        if flag {
            degenerate.push(l);
        }
    }
    Ok(OmpOutcome {
        code,
        degenerate_columns: degenerate,
    })
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One signal: incremental Gram-Schmidt QR over the selected atoms, residual
/// kept orthogonal to the selected span, coefficients recovered at the end by
/// back substitution.
fn encode_one(
    atoms: &Array2<f64>,
    signal: ArrayView1<f64>,
    sparsity: usize,
) -> (Vec<(usize, f64)>, bool) {
    let n_atoms = atoms.ncols();
    let signal_norm = norm(signal);
    let mut residual: Array1<f64> = signal.to_owned();
    let mut selected: Vec<usize> = Vec::with_capacity(sparsity);
    let mut q_basis: Vec<Array1<f64>> = Vec::with_capacity(sparsity);
    // r_cols[k] holds column k of R (length k+1): atom_k = sum_i R[i][k] q_i.
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(sparsity);
    let mut q_dot_signal: Vec<f64> = Vec::with_capacity(sparsity);
    let mut unusable = vec![false; n_atoms];
    let mut degenerate = false;

    while selected.len() < sparsity {
        if norm(residual.view()) <= 1e-12 * signal_norm.max(1e-300) {
            break;
        }
        // argmax |d_j . r| over unselected, ties to the smaller index
        let mut best = usize::MAX;
        let mut best_corr = 0.0f64;
        for j in 0..n_atoms {
            if unusable[j] {
                continue;
            }
            let c = atoms.column(j).dot(&residual).abs();
            if c > best_corr {
                best_corr = c;
                best = j;
            }
        }
        if best == usize::MAX || best_corr <= 1e-13 * signal_norm.max(1e-300) {
            break;
        }
        unusable[best] = true;

        let mut v: Array1<f64> = atoms.column(best).to_owned();
        let mut r_col = Vec::with_capacity(q_basis.len() + 1);
        for q in &q_basis {
            let rij = q.dot(&v);
            v.scaled_add(-rij, q);
            r_col.push(rij);
        }
        let nv = norm(v.view());
        if nv < 1e-10 {
            // Atom linearly dependent on the current support: drop it and flag.
            degenerate = true;
            continue;
        }
        let q = v / nv;
        let qt = q.dot(&residual);
        residual.scaled_add(-qt, &q);
        r_col.push(nv);
        q_basis.push(q);
        q_dot_signal.push(qt);
        r_cols.push(r_col);
        selected.push(best);
    }

    // Back substitution: R x = Q^T s.
    let k = selected.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = q_dot_signal[i];
        for j in (i + 1)..k {
            acc -= r_cols[j][i] * x[j];
        }
        x[i] = acc / r_cols[i][i];
    }
    (selected.into_iter().zip(x).collect(), degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn atoms_from_cols(cols: Vec<Vec<f64>>) -> Array2<f64> {
        let dim = cols[0].len();
        let mut m = Array2::zeros((dim, cols.len()));
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }

    #[test]
    fn exact_single_atom_signal() {
        let atoms = atoms_from_cols(vec![
            unit(vec![1.0, 2.0, 0.0, -1.0]),
            unit(vec![0.0, 1.0, 1.0, 0.0]),
            unit(vec![3.0, 0.0, -1.0, 2.0]),
            unit(vec![1.0, 1.0, 1.0, 1.0]),
        ]);
        let sig = atoms.column(3).to_owned().insert_axis(ndarray::Axis(1));
        let out = omp(&atoms, &sig, 1).unwrap();
        assert_relative_eq!(out.code[[3, 0]], 1.0, epsilon = 1e-12);
        for j in 0..3 {
            assert_eq!(out.code[[j, 0]], 0.0);
        }
        // residual is zero: reconstruction equals the signal
        let rec = atoms.dot(&out.code);
        for (a, b) in rec.iter().zip(sig.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    /// Closed-form least squares on orthogonal atoms: the combination
    /// 2 d1 + 0.5 d2 is recovered exactly at sparsity 2.
    #[test]
    fn orthogonal_two_atom_recovery() {
        let atoms = atoms_from_cols(vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            unit(vec![0.0, 0.0, 1.0, 1.0]),
        ]);
        let signal = array![[2.0], [0.5], [0.0], [0.0]];
        let out = omp(&atoms, &signal, 2).unwrap();
        assert_relative_eq!(out.code[[0, 0]], 2.0, epsilon = 1e-12);
        assert_relative_eq!(out.code[[1, 0]], 0.5, epsilon = 1e-12);
        assert_eq!(out.code[[2, 0]], 0.0);
        assert!(out.degenerate_columns.is_empty());
    }

    /// On the selected support the coefficients solve the normal equations.
    #[test]
    fn coefficients_are_least_squares_on_support() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let dim = 12;
        let n_atoms = 20;
        let mut atoms = Array2::from_shape_fn((dim, n_atoms), |_| rng.random::<f64>() - 0.5);
        for j in 0..n_atoms {
            let n = atoms.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            atoms.column_mut(j).mapv_inplace(|v| v / n);
        }
        let signal = Array2::from_shape_fn((dim, 1), |_| rng.random::<f64>() - 0.5);
        let out = omp(&atoms, &signal, 4).unwrap();
        let support: Vec<usize> = (0..n_atoms).filter(|&j| out.code[[j, 0]] != 0.0).collect();
        assert!(support.len() <= 4);
        // residual must be orthogonal to every selected atom
        let rec = atoms.dot(&out.code);
        let resid: Vec<f64> = signal
            .column(0)
            .iter()
            .zip(rec.column(0).iter())
            .map(|(s, r)| s - r)
            .collect();
        for &j in &support {
            let dot: f64 = atoms
                .column(j)
                .iter()
                .zip(resid.iter())
                .map(|(a, r)| a * r)
                .sum();
            assert!(dot.abs() < 1e-10, "atom {j} correlation {dot}");
        }
    }

    #[test]
    fn duplicate_atoms_are_flagged_not_fatal() {
        let a = unit(vec![1.0, 1.0, 0.0]);
        let atoms = atoms_from_cols(vec![a.clone(), a.clone(), unit(vec![0.0, 0.0, 1.0])]);
        let signal = array![[1.0], [1.0], [0.3]];
        let out = omp(&atoms, &signal, 3).unwrap();
        assert_eq!(out.degenerate_columns, vec![0]);
        // still fits the signal with the independent atoms
        let rec = atoms.dot(&out.code);
        for (r, s) in rec.iter().zip(signal.iter()) {
            assert_relative_eq!(r, s, epsilon = 1e-10);
        }
    }

    #[test]
    fn non_unit_atoms_are_rejected() {
        let atoms = atoms_from_cols(vec![vec![2.0, 0.0], vec![0.0, 1.0]]);
        let signal = array![[1.0], [1.0]];
        assert!(omp(&atoms, &signal, 1).is_err());
    }
}
