//! Brute-force reference for the MMD estimator. Shares no code with
//! [`super::mmd_biased`]: every kernel value is recomputed from scratch in a
//! plain triple loop over pairs and coordinates.

use ndarray::Array2;

use super::KernelSpec;
use crate::error::{Error, Result};

pub fn mmd_oracle(zs: &Array2<f64>, zt: &Array2<f64>, spec: &KernelSpec) -> Result<f64> {
    if zs.nrows() == 0 || zt.nrows() == 0 {
        return Err(Error::EmptyInput("MMD oracle sample"));
    }
    if zs.ncols() != zt.ncols() {
        return Err(Error::DimensionMismatch {
            context: "MMD oracle samples".into(),
            expected: zs.ncols(),
            found: zt.ncols(),
        });
    }
    let k = |a: &Array2<f64>, i: usize, b: &Array2<f64>, j: usize| -> f64 {
        let mut total = 0.0;
        for (sigma, weight) in spec.bandwidths().iter().zip(spec.weights()) {
            let mut d2 = 0.0;
            for c in 0..a.ncols() {
                let diff = a[[i, c]] - b[[j, c]];
                d2 += diff * diff;
            }
            total += weight * (-d2 / (2.0 * sigma * sigma)).exp();
        }
        total
    };
    let (ns, nt) = (zs.nrows(), zt.nrows());
    let mut ss = 0.0;
    for i in 0..ns {
        for j in 0..ns {
            ss += k(zs, i, zs, j);
        }
    }
    let mut tt = 0.0;
    for i in 0..nt {
        for j in 0..nt {
            tt += k(zt, i, zt, j);
        }
    }
    let mut st = 0.0;
    for i in 0..ns {
        for j in 0..nt {
            st += k(zs, i, zt, j);
        }
    }
    let (ns, nt) = (ns as f64, nt as f64);
    Ok(ss / (ns * ns) + tt / (nt * nt) - 2.0 * st / (ns * nt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::multi_kernel;
    use ndarray::array;

    #[test]
    fn scalar_closed_form() {
        let spec = KernelSpec::default();
        for (a, b) in [(0.0, 1.0), (-0.3, 2.2), (1.5, 1.5)] {
            let v = mmd_oracle(&array![[a]], &array![[b]], &spec).unwrap();
            let want = 2.0 - 2.0 * multi_kernel(&[a], &[b], &spec).unwrap();
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn hand_case() {
        let v = mmd_oracle(&array![[0.0]], &array![[1.0]], &KernelSpec::single(1.0).unwrap()).unwrap();
        assert!((v - (2.0 - 2.0 * (-0.5f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn row_permutation_invariant() {
        let zs = array![[0.1, 0.2], [1.0, -0.5], [0.3, 0.9]];
        let perm = array![[0.3, 0.9], [0.1, 0.2], [1.0, -0.5]];
        let zt = array![[0.0, 0.0], [0.5, 0.5]];
        let spec = KernelSpec::default();
        let (a, b) = (
            mmd_oracle(&zs, &zt, &spec).unwrap(),
            mmd_oracle(&perm, &zt, &spec).unwrap(),
        );
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn identical_sets() {
        let z = array![[0.1, 0.2], [1.0, -0.5]];
        assert!(mmd_oracle(&z, &z, &KernelSpec::default()).unwrap().abs() < 1e-12);
    }
}
