//! Central finite-difference check of [`loss_and_grad`] against
//! [`objective`] on small random problems.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::loss::{loss_and_grad, objective};
use super::TrainConfig;
use crate::cache_adapter::CacheAdapter;
use crate::error::Result;
use crate::feature_store::{FeatureMatrix, Origin};
use crate::kernels::KernelSpec;

/// Denominator floor for the relative error `|a − n| / max(|a|, |n|, floor)`.
/// Coordinates with gradients below it are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckInstance {
    pub classes: usize,
    /// Real and synthetic rows per class, each.
    pub shots: usize,
    pub dim: usize,
    pub batch_rows: usize,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub kernel: KernelSpec,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckInstance {
    fn default() -> Self {
        Self {
            classes: 2,
            shots: 2,
            dim: 3,
            batch_rows: 5,
            alpha: 1.0,
            beta: 5.5,
            a: 1.0,
            kernel: KernelSpec::default(),
            step: 1e-5,
            seed: 0,
        }
    }
}

/// A concrete problem built from a [`GradCheckInstance`].
#[derive(Clone, Debug)]
pub struct GradCheckProblem {
    pub adapter: CacheAdapter,
    pub real: Array2<f64>,
    pub synth: Array2<f64>,
    pub batch: Array2<f64>,
    pub batch_labels: Vec<usize>,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(key row, coordinate)` of the worst error.
    pub worst: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates: usize,
    pub mmd_exercised: bool,
    pub tolerance: f64,
    pub passed: bool,
}

fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize, scale: f64) -> Array2<f64> {
    let mut m = Array2::zeros((rows, dim));
    for mut r in m.outer_iter_mut() {
        r.mapv_inplace(|_| -> f64 { StandardNormal.sample(rng) });
        let n = r.dot(&r).sqrt().max(1e-9);
        r.mapv_inplace(|v| v / n * scale);
    }
    m
}

impl GradCheckInstance {
    pub fn build(&self) -> Result<GradCheckProblem> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.classes * self.shots;
        let real = unit_rows(&mut rng, n, self.dim, 1.0);
        let synth = unit_rows(&mut rng, n, self.dim, 1.0);
        let text = unit_rows(&mut rng, self.classes, self.dim, 1.0);
        let labels: Vec<u32> = (0..n).map(|i| (i / self.shots) as u32).collect();

        let support_rows = ndarray::concatenate(ndarray::Axis(0), &[real.view(), synth.view()]).expect("same width");
        let mut origin = vec![Origin::Real; n];
        origin.extend(vec![Origin::Synthetic; n]);
        let support_labels = labels.iter().chain(&labels).copied().collect();
        let support = FeatureMatrix::from_array(&support_rows, support_labels, origin)?;
        let support = crate::feature_store::l2_normalize(&support)?;
        let text_labels = (0..self.classes as u32).collect();
        let text = crate::feature_store::l2_normalize(&FeatureMatrix::from_array(
            &text,
            text_labels,
            vec![Origin::Real; self.classes],
        )?)?;

        // Keys away from the unit sphere keep every similarity below the
        // clamp point of φ.
        let keys = unit_rows(&mut rng, 2 * n, self.dim, 0.9);
        let adapter = CacheAdapter::init_from_support(&support, &text, self.beta, self.a)?.with_keys(keys)?;

        let batch = unit_rows(&mut rng, self.batch_rows, self.dim, 1.0);
        let batch_labels = (0..self.batch_rows)
            .map(|_| rng.random_range(0..self.classes))
            .collect();
        let config = TrainConfig {
            alpha: self.alpha,
            beta: self.beta,
            a: self.a,
            kernel: self.kernel.clone(),
            ..TrainConfig::default()
        };
        Ok(GradCheckProblem {
            adapter,
            real,
            synth,
            batch,
            batch_labels,
            config,
        })
    }
}

pub fn grad_check(instance: &GradCheckInstance, tolerance: f64) -> Result<GradCheckReport> {
    grad_check_with(instance, tolerance, |p| {
        Ok(loss_and_grad(&p.adapter, &p.real, &p.synth, &p.batch, &p.batch_labels, &p.config)?.d_keys)
    })
}

/// Like [`grad_check`] but with the analytic gradient supplied by `analytic`.
pub fn grad_check_with(
    instance: &GradCheckInstance,
    tolerance: f64,
    analytic: impl Fn(&GradCheckProblem) -> Result<Array2<f64>>,
) -> Result<GradCheckReport> {
    let problem = instance.build()?;
    let grad = analytic(&problem)?;
    let h = instance.step;
    let eval = |keys: Array2<f64>| -> Result<f64> {
        let adapter = problem.adapter.clone().with_keys(keys)?;
        objective(
            &adapter,
            &problem.real,
            &problem.synth,
            &problem.batch,
            &problem.batch_labels,
            &problem.config,
        )
    };

    let keys = problem.adapter.keys();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates: keys.len(),
        mmd_exercised: instance.alpha != 0.0,
        tolerance,
        passed: false,
    };
    for i in 0..keys.nrows() {
        for j in 0..keys.ncols() {
            let mut up = keys.clone();
            up[[i, j]] += h;
            let mut down = keys.clone();
            down[[i, j]] -= h;
            let numeric = (eval(up)? - eval(down)?) / (2.0 * h);
            let a = grad[[i, j]];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            if (i, j) == (0, 0) || rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (i, j);
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    report.passed = report.max_rel_err < tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_passes() {
        let r = grad_check(&GradCheckInstance::default(), 1e-5).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.mmd_exercised);
        assert_eq!(r.coordinates, 8 * 3);
    }

    #[test]
    fn alpha_zero_matches_ce_only_check() {
        let inst = GradCheckInstance {
            alpha: 0.0,
            ..Default::default()
        };
        let full = grad_check(&inst, 1e-5).unwrap();
        assert!(!full.mmd_exercised);
        // The same problem with the MMD sets swapped out cannot differ.
        let ce_only = grad_check_with(&inst, 1e-5, |p| {
            let empty = Array2::zeros((0, p.batch.ncols()));
            Ok(loss_and_grad(&p.adapter, &empty, &empty, &p.batch, &p.batch_labels, &p.config)?.d_keys)
        })
        .unwrap();
        assert_eq!(full, ce_only);
    }

    #[test]
    fn perturbed_beta_is_caught() {
        let inst = GradCheckInstance::default();
        let r = grad_check_with(&inst, 1e-5, |p| {
            let wrong = GradCheckInstance {
                beta: inst.beta + 1.0,
                ..inst.clone()
            }
            .build()?;
            let adapter = wrong.adapter.with_keys(p.adapter.keys().clone())?;
            Ok(loss_and_grad(&adapter, &p.real, &p.synth, &p.batch, &p.batch_labels, &p.config)?.d_keys)
        })
        .unwrap();
        assert!(!r.passed, "{r:?}");
    }
}
