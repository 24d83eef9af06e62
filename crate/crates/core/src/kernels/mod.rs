//! Gaussian RBF kernels and the biased (V-statistic) multi-kernel MMD.
//!
//! `k_σ(x, y) = exp(−‖x − y‖² / (2σ²))` and the multi-kernel is the convex
//! combination `Σ_p w_p k_{σ_p}`. The estimator keeps the diagonal terms:
//!
//! ```text
//! D = 1/ns² ΣΣ k(s_i, s_j) + 1/nt² ΣΣ k(t_i, t_j) − 2/(ns·nt) ΣΣ k(s_i, t_j)
//! ```

mod mmd;
mod oracle;
mod permutation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mmd::{mmd_biased, mmd_gradient, MmdResult};
pub use oracle::mmd_oracle;
pub use permutation::permutation_test;

/// Bandwidths and convex weights of a multi-kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    bandwidths: Vec<f64>,
    weights: Vec<f64>,
}

impl KernelSpec {
    pub fn new(bandwidths: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let spec = Self { bandwidths, weights };
        spec.validate()?;
        Ok(spec)
    }

    /// Equal weights over `bandwidths`.
    pub fn uniform(bandwidths: Vec<f64>) -> Result<Self> {
        let w = 1.0 / bandwidths.len().max(1) as f64;
        let n = bandwidths.len();
        Self::new(bandwidths, vec![w; n])
    }

    pub fn single(sigma: f64) -> Result<Self> {
        Self::new(vec![sigma], vec![1.0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(Error::InvalidKernel("no bandwidths".into()));
        }
        if self.bandwidths.len() != self.weights.len() {
            return Err(Error::InvalidKernel(format!(
                "{} bandwidths but {} weights",
                self.bandwidths.len(),
                self.weights.len()
            )));
        }
        if let Some(s) = self.bandwidths.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidKernel(format!("bandwidth {s} is not positive")));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidKernel(format!("weight {w} is not positive")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidKernel(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(σ_p, w_p)` pairs.
    pub fn components(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.bandwidths.iter().copied().zip(self.weights.iter().copied())
    }

    /// Multi-kernel value for a precomputed squared distance.
    pub(crate) fn eval_sq(&self, d2: f64) -> f64 {
        self.components().map(|(s, w)| w * (-d2 / (2.0 * s * s)).exp()).sum()
    }

    /// `Σ_p w_p k_p / σ_p²`, the factor in `∂k/∂x = −c · (x − y)`.
    pub(crate) fn grad_coeff_sq(&self, d2: f64) -> f64 {
        self.components()
            .map(|(s, w)| w * (-d2 / (2.0 * s * s)).exp() / (s * s))
            .sum()
    }
}

impl Default for KernelSpec {
    /// σ ∈ {0.5, 1, 2} with equal weights.
    fn default() -> Self {
        Self::uniform(vec![0.5, 1.0, 2.0]).expect("default kernel is valid")
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel arguments".into(),
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(())
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    check_dims(x, y)?;
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidKernel(format!("bandwidth {sigma} is not positive")));
    }
    Ok((-sq_dist(x, y) / (2.0 * sigma * sigma)).exp())
}

pub fn multi_kernel(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_dims(x, y)?;
    Ok(spec.eval_sq(sq_dist(x, y)))
}
