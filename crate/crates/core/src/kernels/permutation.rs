use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sq_dist, KernelSpec};
use crate::error::{Error, Result};

/// Permutation two-sample test on the biased MMD statistic.
///
/// Returns `(1 + #{permuted ≥ observed}) / (1 + n_perm)`.
pub fn permutation_test(
    zs: &Array2<f64>,
    zt: &Array2<f64>,
    spec: &KernelSpec,
    n_perm: usize,
    seed: u64,
) -> Result<f64> {
    if n_perm < 100 {
        return Err(Error::InvalidConfig(format!("n_perm must be >= 100, got {n_perm}")));
    }
    if zs.nrows() == 0 || zt.nrows() == 0 {
        return Err(Error::EmptyInput("permutation test sample"));
    }
    if zs.ncols() != zt.ncols() {
        return Err(Error::DimensionMismatch {
            context: "permutation test samples".into(),
            expected: zs.ncols(),
            found: zt.ncols(),
        });
    }
    let pooled = concatenate(Axis(0), &[zs.view(), zt.view()]).expect("same width");
    let n = pooled.nrows();
    let rows: Vec<Vec<f64>> = pooled.outer_iter().map(|r| r.to_vec()).collect();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = spec.eval_sq(sq_dist(&rows[i], &rows[j]));
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let ns = zs.nrows();
    let statistic = |order: &[usize]| -> f64 {
        let (s, t) = order.split_at(ns);
        let block = |a: &[usize], b: &[usize]| -> f64 {
            let mut total = 0.0;
            for &i in a {
                for &j in b {
                    total += gram[i * n + j];
                }
            }
            total / (a.len() * b.len()) as f64
        };
        block(s, s) + block(t, t) - 2.0 * block(s, t)
    };

    let mut order: Vec<usize> = (0..n).collect();
    let observed = statistic(&order);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        order.shuffle(&mut rng);
        if statistic(&order) >= observed {
            exceed += 1;
        }
    }
    Ok((1 + exceed) as f64 / (1 + n_perm) as f64)
}
