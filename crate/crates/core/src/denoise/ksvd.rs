//! Regularized K-SVD dictionary learning for field denoising.
//!
//! Training alternates (a) sparse coding of the patch stack by OMP at a fixed
//! training sparsity and (b) per-atom updates that minimize the regularized
//! residual `||E - d a||²_F + rho ||a||²` over a unit atom and its code row:
//! the optimal atom is the top left singular vector of the restricted residual
//! and the optimal row is the correlation shrunk by `1/(1 + rho)`. Both steps
//! only ever accept a candidate that does not increase the objective
//! `||S - DA||²_F + rho ||A||²_F`, so the objective is non-increasing across
//! every full (code, dictionary) iteration.
//!
//! After training, the stack is re-encoded at sparsity `floor(p²/10)` and the
//! field reassembled from the reconstruction `D A`.

use super::omp::omp;
use super::patches::{from_patches, to_patches};
use super::DenoiseError;
use crate::grid::Field;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Learned dictionary (unit-norm atoms) and the sparse code of the stack.
#[derive(Debug, Clone)]
pub struct Dictionary {
    pub atoms: Array2<f64>,
    pub code: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct RksvdParams {
    pub patch_size: usize,
    /// Number of atoms; `None` selects `min(2 p², f/2)` for `f` signals.
    /// Must not exceed the signal count, or the dictionary can only memorize.
    pub n_atoms: Option<usize>,
    pub rho: f64,
    pub train_sparsity: usize,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RksvdOutcome {
    pub field: Field,
    /// Objective after the initial (zero) code and after every iteration.
    pub objective: Vec<f64>,
    /// Sparsity used for the final reconstruction encode.
    pub final_sparsity: usize,
    pub dictionary: Dictionary,
}

/// `||S - DA||²_F + rho ||A||²_F`
pub fn regularized_objective(
    signals: &Array2<f64>,
    atoms: &Array2<f64>,
    code: &Array2<f64>,
    rho: f64,
) -> f64 {
    let rec = atoms.dot(code);
    let fit: f64 = signals
        .iter()
        .zip(rec.iter())
        .map(|(s, r)| (s - r) * (s - r))
        .sum();
    fit + rho * code.iter().map(|a| a * a).sum::<f64>()
}

fn col_norm(m: &Array2<f64>, j: usize) -> f64 {
    m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Trains the dictionary on a patch stack. Returns the dictionary and the
/// objective history (initial value plus one entry per iteration).
pub fn rksvd_train(
    signals: &Array2<f64>,
    params: &RksvdParams,
) -> Result<(Dictionary, Vec<f64>), DenoiseError> {
    let (dim, n_signals) = signals.dim();
    if params.rho < 0.0 || !params.rho.is_finite() {
        return Err(DenoiseError::InvalidParam("rho must be >= 0".into()));
    }
    if params.iterations == 0 || params.train_sparsity == 0 {
        return Err(DenoiseError::InvalidParam(
            "iterations and training sparsity must be positive".into(),
        ));
    }
    let n_atoms = params
        .n_atoms
        .unwrap_or_else(|| (2 * dim).min((n_signals / 2).max(1)));
    if n_atoms == 0 || n_atoms > n_signals {
        return Err(DenoiseError::InvalidParam(format!(
            "need 1..={n_signals} atoms (one per distinct training signal at most), got {n_atoms}"
        )));
    }
    if params.train_sparsity > n_atoms {
        return Err(DenoiseError::InvalidParam(format!(
            "training sparsity {} exceeds atom count {n_atoms}",
            params.train_sparsity
        )));
    }

    // Seeded initialization from distinct signal columns, normalized.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let chosen = rand::seq::index::sample(&mut rng, n_signals, n_atoms);
    let mut atoms = Array2::zeros((dim, n_atoms));
    for (j, l) in chosen.iter().enumerate() {
        let n = col_norm(signals, l);
        if n > 1e-300 {
            for i in 0..dim {
                atoms[[i, j]] = signals[[i, l]] / n;
            }
        } else {
            atoms[[i_for_unit(j, dim), j]] = 1.0;
        }
    }

    let mut code: Array2<f64> = Array2::zeros((n_atoms, n_signals));
    let mut residual: Array2<f64> = signals.to_owned();
    let mut history = vec![regularized_objective(signals, &atoms, &code, params.rho)];

    for _ in 0..params.iterations {
        // (a) sparse coding, accepted column-wise only when it lowers the
        // column's share of the objective
        let proposal = omp(&atoms, signals, params.train_sparsity)?;
        for l in 0..n_signals {
            let old_cost = residual.column(l).iter().map(|v| v * v).sum::<f64>()
                + params.rho * code.column(l).iter().map(|v| v * v).sum::<f64>();
            let new_col = proposal.code.column(l);
            let rec = atoms.dot(&new_col);
            let new_fit: f64 = signals
                .column(l)
                .iter()
                .zip(rec.iter())
                .map(|(s, r)| (s - r) * (s - r))
                .sum();
            let new_cost = new_fit + params.rho * new_col.iter().map(|v| v * v).sum::<f64>();
            if new_cost <= old_cost {
                for i in 0..n_atoms {
                    code[[i, l]] = new_col[i];
                }
                for i in 0..dim {
                    residual[[i, l]] = signals[[i, l]] - rec[i];
                }
            }
        }

        // (b) per-atom damped rank-1 updates
        let mut reseeded: Vec<usize> = Vec::new();
        for j in 0..n_atoms {
            let support: Vec<usize> = (0..n_signals).filter(|&l| code[[j, l]] != 0.0).collect();
            if support.is_empty() {
                // Unused atom: reseed from the worst-represented signal.
                let mut worst = 0;
                let mut worst_norm = -1.0;
                for l in 0..n_signals {
                    if reseeded.contains(&l) {
                        continue;
                    }
                    let n = residual.column(l).iter().map(|v| v * v).sum::<f64>();
                    if n > worst_norm {
                        worst_norm = n;
                        worst = l;
                    }
                }
                reseeded.push(worst);
                let n = col_norm(signals, worst);
                if n > 1e-300 {
                    for i in 0..dim {
                        atoms[[i, j]] = signals[[i, worst]] / n;
                    }
                }
                continue;
            }

            // Restricted residual with atom j's contribution added back.
            let k = support.len();
            let mut e = Array2::zeros((dim, k));
            for (c, &l) in support.iter().enumerate() {
                let aj = code[[j, l]];
                for i in 0..dim {
                    e[[i, c]] = residual[[i, l]] + atoms[[i, j]] * aj;
                }
            }
            let e_sq: f64 = e.iter().map(|v| v * v).sum();
            let old_cost = {
                let mut fit = 0.0;
                let mut reg = 0.0;
                for (c, &l) in support.iter().enumerate() {
                    let aj = code[[j, l]];
                    for i in 0..dim {
                        let r = e[[i, c]] - atoms[[i, j]] * aj;
                        fit += r * r;
                    }
                    reg += aj * aj;
                }
                fit + params.rho * reg
            };

            // Power iteration for the top left singular vector, seeded with
            // the current atom for determinism.
            let mut u: Array1<f64> = atoms.column(j).to_owned();
            for _ in 0..30 {
                let v = e.t().dot(&u);
                let w = e.dot(&v);
                let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n < 1e-300 {
                    break;
                }
                u = w / n;
            }
            let corr = e.t().dot(&u);
            let corr_sq: f64 = corr.iter().map(|v| v * v).sum();
            let new_cost = e_sq - corr_sq / (1.0 + params.rho);
            if new_cost <= old_cost {
                let row = corr / (1.0 + params.rho);
                for (c, &l) in support.iter().enumerate() {
                    code[[j, l]] = row[c];
                    for i in 0..dim {
                        residual[[i, l]] = e[[i, c]] - u[i] * row[c];
                    }
                }
                for i in 0..dim {
                    atoms[[i, j]] = u[i];
                }
            }
        }

        history.push(regularized_objective(signals, &atoms, &code, params.rho));
        debug_assert!(
            history[history.len() - 2] - history[history.len() - 1] >= -1e-9,
            "objective increased"
        );
        debug_assert!((0..n_atoms).all(|j| (col_norm(&atoms, j) - 1.0).abs() < 1e-9));
        debug_assert!((0..n_signals).all(|l| {
            code.column(l).iter().filter(|v| **v != 0.0).count() <= params.train_sparsity
        }));
    }

    Ok((Dictionary { atoms, code }, history))
}

fn i_for_unit(j: usize, dim: usize) -> usize {
    j % dim
}

/// Denoises a field: patch extraction, dictionary training, final re-encode at
/// sparsity `floor(p²/10)`, reconstruction.
pub fn rksvd_denoise(field: &Field, params: &RksvdParams) -> Result<RksvdOutcome, DenoiseError> {
    let stack = to_patches(field, params.patch_size)?;
    let (dict, history) = rksvd_train(&stack.data, params)?;
    let p2 = params.patch_size * params.patch_size;
    let final_sparsity = (p2 / 10).max(1).min(dict.atoms.ncols());
    let encode = omp(&dict.atoms, &stack.data, final_sparsity)?;
    let rec = dict.atoms.dot(&encode.code);
    let rec_stack = super::patches::PatchStack {
        patch_size: stack.patch_size,
        data: rec,
        origins: stack.origins.clone(),
        removed_mean: stack.removed_mean,
    };
    let out = from_patches(&rec_stack, field.x_axis, field.t_axis)?;
    Ok(RksvdOutcome {
        field: out,
        objective: history,
        final_sparsity,
        dictionary: Dictionary {
            atoms: dict.atoms,
            code: encode.code,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::patches::PatchStack;
    use crate::grid::Axis;
    use rand::{Rng, SeedableRng};

    /// Zero-sum unit atoms keep the reconstructed field's global mean equal to
    /// the injected mean, so a 1-sparse synthetic stack round-trips exactly.
    fn zero_sum_unit_atoms(dim: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut atoms = Array2::zeros((dim, n));
        for j in 0..n {
            let mut col: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
            let mean = col.iter().sum::<f64>() / dim as f64;
            col.iter_mut().for_each(|v| *v -= mean);
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (i, v) in col.iter().enumerate() {
                atoms[[i, j]] = v / norm;
            }
        }
        atoms
    }

    #[test]
    fn exactly_representable_stack_reconstructs_to_machine_precision() {
        let p = 4;
        let (nx, nt) = (16, 8);
        let n_tiles = (nx / p) * (nt / p); // 8 signals
        let atoms = zero_sum_unit_atoms(p * p, n_tiles, 7);
        let mut data = Array2::zeros((p * p, n_tiles));
        for l in 0..n_tiles {
            let scale = 1.0 + 0.3 * l as f64;
            for i in 0..p * p {
                data[[i, l]] = scale * atoms[[i, l]];
            }
        }
        let stack = PatchStack {
            patch_size: p,
            data,
            origins: (0..nx / p)
                .flat_map(|a| (0..nt / p).map(move |b| (a * p, b * p)))
                .collect(),
            removed_mean: 0.25,
        };
        let x_axis = Axis::new(0.0, 1.0, nx).unwrap();
        let t_axis = Axis::new(0.0, 1.0, nt).unwrap();
        let field = from_patches(&stack, x_axis, t_axis).unwrap();

        let out = rksvd_denoise(
            &field,
            &RksvdParams {
                patch_size: p,
                n_atoms: Some(n_tiles),
                rho: 0.0,
                train_sparsity: 1,
                iterations: 5,
                seed: 3,
            },
        )
        .unwrap();
        let num: f64 = out
            .field
            .values
            .iter()
            .zip(field.values.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = field.values.iter().map(|v| v * v).sum();
        assert!((num / den).sqrt() < 1e-8, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn objective_is_monotone_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x_axis = Axis::new(0.0, 1.0, 30).unwrap();
        let t_axis = Axis::new(0.0, 1.0, 25).unwrap();
        let values = Array2::from_shape_fn((30, 25), |(i, j)| {
            (i as f64 * 0.3).sin() * (j as f64 * 0.2).cos() + 0.2 * (rng.random::<f64>() - 0.5)
        });
        let field = Field::new(x_axis, t_axis, values).unwrap();
        let out = rksvd_denoise(
            &field,
            &RksvdParams {
                patch_size: 5,
                n_atoms: Some(12),
                rho: 0.05,
                train_sparsity: 2,
                iterations: 15,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(out.objective.len(), 16);
        for w in out.objective.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0),
                "objective rose: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn dictionary_invariants_hold_after_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let signals = Array2::from_shape_fn((16, 40), |_| rng.random::<f64>() - 0.5);
        let params = RksvdParams {
            patch_size: 4,
            n_atoms: Some(10),
            rho: 0.1,
            train_sparsity: 3,
            iterations: 8,
            seed: 2,
        };
        let (dict, _) = rksvd_train(&signals, &params).unwrap();
        for j in 0..10 {
            let n = dict.atoms.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12, "atom {j} norm {n}");
        }
        for l in 0..40 {
            let nnz = dict.code.column(l).iter().filter(|v| **v != 0.0).count();
            assert!(nnz <= 3);
        }
    }

    #[test]
    fn final_encode_sparsity_follows_patch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x_axis = Axis::new(0.0, 1.0, 64).unwrap();
        let t_axis = Axis::new(0.0, 1.0, 40).unwrap();
        let values = Array2::from_shape_fn((64, 40), |(i, j)| {
            ((i + 2 * j) as f64 * 0.05).sin() + 0.05 * (rng.random::<f64>() - 0.5)
        });
        let field = Field::new(x_axis, t_axis, values).unwrap();
        let out = rksvd_denoise(
            &field,
            &RksvdParams {
                patch_size: 8,
                n_atoms: None,
                rho: 0.05,
                train_sparsity: 1,
                iterations: 3,
                seed: 4,
            },
        )
        .unwrap();
        assert_eq!(out.final_sparsity, 6); // floor(64 / 10)
        for l in 0..out.dictionary.code.ncols() {
            let nnz = out
                .dictionary
                .code
                .column(l)
                .iter()
                .filter(|v| **v != 0.0)
                .count();
            assert!(nnz <= 6);
        }
    }

    #[test]
    fn more_atoms_than_signals_is_rejected() {
        let signals = Array2::zeros((9, 5));
        let params = RksvdParams {
            patch_size: 3,
            n_atoms: Some(10),
            rho: 0.0,
            train_sparsity: 1,
            iterations: 1,
            seed: 0,
        };
        assert!(matches!(
            rksvd_train(&signals, &params),
            Err(DenoiseError::InvalidParam(_))
        ));
    }
}
