use serde::{Deserialize, Serialize};

use crate::cache_adapter::{DEFAULT_BETA, DEFAULT_RESIDUAL};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// MMD loss coefficient.
    pub alpha: f64,
    pub lr0: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Sharpness of the affinity function.
    pub beta: f64,
    /// Residual ratio weighting the cache term.
    pub a: f64,
    pub kernel: KernelSpec,
    pub seed: u64,
    pub weight_decay: f64,
    pub adam_betas: (f64, f64),
    pub eps: f64,
    pub eta_min: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lr0: 0.001,
            epochs: 20,
            batch_size: 128,
            beta: DEFAULT_BETA,
            a: DEFAULT_RESIDUAL,
            kernel: KernelSpec::default(),
            seed: 0,
            weight_decay: 0.01,
            adam_betas: (0.9, 0.999),
            eps: 1e-8,
            eta_min: 0.0,
        }
    }
}

fn finite_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        finite_nonneg("alpha", self.alpha)?;
        positive("lr0", self.lr0)?;
        positive("beta", self.beta)?;
        finite_nonneg("residual ratio", self.a)?;
        finite_nonneg("weight_decay", self.weight_decay)?;
        positive("eps", self.eps)?;
        finite_nonneg("eta_min", self.eta_min)?;
        if self.eta_min > self.lr0 {
            return Err(Error::InvalidConfig(format!(
                "eta_min {} exceeds lr0 {}",
                self.eta_min, self.lr0
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::InvalidConfig(format!(
                "adam betas must lie in [0, 1), got ({b1}, {b2})"
            )));
        }
        self.kernel.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.lr0, 0.001);
        assert_eq!(c.batch_size, 128);
        assert_eq!(c.beta, 5.5);
        assert_eq!(c.a, 1.0);
        assert_eq!(c.adam_betas, (0.9, 0.999));
        c.validate().unwrap();
    }

    #[test]
    fn rejects_negative_alpha() {
        let c = TrainConfig {
            alpha: -1.0,
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().is_config_error());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"alpha": 0.1, "epochs": 3}"#).unwrap();
        assert_eq!(c.alpha, 0.1);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.beta, 5.5);
    }
}
