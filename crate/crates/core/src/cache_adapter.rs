//! Key-value cache model over support embeddings.
//!
//! For L2-normalized queries `f`:
//!
//! ```text
//! cache(f)  = φ(f Kᵀ) V            φ(x) = exp(−β(1 − x))
//! logits(f) = a · cache(f) + f Wᵀ
//! ```
//!
//! `K` are the learnable keys (one per support row), `V` the fixed one-hot
//! labels and `W` the fixed zero-shot text classifier.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{read_feature_file, write_feature_file, FeatureMatrix, Origin};

/// Allowed deviation of a row norm from 1 for inputs that must be normalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

pub const DEFAULT_BETA: f64 = 5.5;
pub const DEFAULT_RESIDUAL: f64 = 1.0;

pub const KEYS_FILE: &str = "keys.capf";
pub const SIDECAR_FILE: &str = "adapter.json";

#[derive(Clone, Debug, PartialEq)]
pub struct CacheAdapter {
    keys: Array2<f64>,
    labels: Vec<usize>,
    origin: Vec<Origin>,
    values: Array2<f64>,
    text_weights: Array2<f64>,
    beta: f64,
    a: f64,
}

/// JSON sidecar written next to the keys file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub beta: f64,
    pub a: f64,
    pub class_count: usize,
    pub manifest_hash: String,
}

/// Elementwise `exp(−β(1 − x))`. Inputs above 1 are clamped to 1.
pub fn phi(x: &Array2<f64>, beta: f64) -> Array2<f64> {
    x.mapv(|v| (-beta * (1.0 - v.min(1.0))).exp())
}

/// Number of similarities that [`phi`] clamps.
pub fn clamped_count(x: &Array2<f64>) -> usize {
    x.iter().filter(|&&v| v > 1.0).count()
}

fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut v = Array2::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        v[[i, l]] = 1.0;
    }
    v
}

fn check_scalars(beta: f64, a: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidConfig(format!("residual ratio must be >= 0, got {a}")));
    }
    Ok(())
}

impl CacheAdapter {
    /// Caches every support row (real and synthetic) as a key with its
    /// one-hot label as value.
    pub fn init_from_support(support: &FeatureMatrix, text_weights: &FeatureMatrix, beta: f64, a: f64) -> Result<Self> {
        check_scalars(beta, a)?;
        if support.dim() != text_weights.dim() {
            return Err(Error::DimensionMismatch {
                context: "support vs text classifier".into(),
                expected: text_weights.dim(),
                found: support.dim(),
            });
        }
        let classes = text_weights.rows();
        support.check_labels(classes)?;
        support.check_normalized("support", NORM_TOLERANCE)?;
        text_weights.check_normalized("text classifier", NORM_TOLERANCE)?;
        let labels = support.labels_usize();
        Ok(Self {
            keys: support.to_array(),
            values: one_hot(&labels, classes),
            labels,
            origin: support.origin().to_vec(),
            text_weights: text_weights.to_array(),
            beta,
            a,
        })
    }

    pub fn keys(&self) -> &Array2<f64> {
        &self.keys
    }

    pub(crate) fn keys_mut(&mut self) -> &mut Array2<f64> {
        &mut self.keys
    }

    /// Replaces the keys, keeping everything else.
    pub fn with_keys(mut self, keys: Array2<f64>) -> Result<Self> {
        if keys.dim() != self.keys.dim() {
            return Err(Error::DimensionMismatch {
                context: "replacement keys".into(),
                expected: self.keys.len(),
                found: keys.len(),
            });
        }
        self.keys = keys;
        Ok(self)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn text_weights(&self) -> &Array2<f64> {
        &self.text_weights
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn residual(&self) -> f64 {
        self.a
    }

    pub fn num_classes(&self) -> usize {
        self.text_weights.nrows()
    }

    pub fn num_keys(&self) -> usize {
        self.keys.nrows()
    }

    pub fn dim(&self) -> usize {
        self.keys.ncols()
    }

    fn check_query(&self, f: &Array2<f64>) -> Result<()> {
        if f.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "query features vs cache keys".into(),
                expected: self.dim(),
                found: f.ncols(),
            });
        }
        Ok(())
    }

    /// Cosine similarities `f Kᵀ` (rows × keys).
    pub fn similarities(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_query(f)?;
        Ok(f.dot(&self.keys.t()))
    }

    /// `φ(f Kᵀ)`.
    pub fn affinities(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(phi(&self.similarities(f)?, self.beta))
    }

    /// Cache-model output `φ(f Kᵀ) V` before the residual ratio; the
    /// representation aligned by the MMD loss.
    pub fn mmd_embedding(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.affinities(f)?.dot(&self.values))
    }

    /// `a · φ(f Kᵀ) V`.
    pub fn cache_logits(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.mmd_embedding(f)? * self.a)
    }

    /// Zero-shot term `f Wᵀ`.
    pub fn text_logits(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_query(f)?;
        Ok(f.dot(&self.text_weights.t()))
    }

    pub fn full_logits(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.cache_logits(f)? + self.text_logits(f)?)
    }

    /// Writes `keys.capf` and `adapter.json` into `dir`. Keys are stored at
    /// `f32` precision.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>, manifest_hash: &str) -> Result<()> {
        let dir = dir.as_ref();
        let labels = self.labels.iter().map(|&l| l as u32).collect();
        let keys = FeatureMatrix::from_array(&self.keys, labels, self.origin.clone())?;
        write_feature_file(&keys, dir.join(KEYS_FILE))?;
        let meta = CheckpointMeta {
            beta: self.beta,
            a: self.a,
            class_count: self.num_classes(),
            manifest_hash: manifest_hash.to_string(),
        };
        let path = dir.join(SIDECAR_FILE);
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Restores an adapter saved by [`CacheAdapter::save_checkpoint`].
    pub fn load_checkpoint(dir: impl AsRef<Path>, text_weights: &FeatureMatrix) -> Result<(Self, CheckpointMeta)> {
        let dir = dir.as_ref();
        let path = dir.join(SIDECAR_FILE);
        let meta: CheckpointMeta = serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
        check_scalars(meta.beta, meta.a)?;
        if meta.class_count != text_weights.rows() {
            return Err(Error::DimensionMismatch {
                context: "checkpoint classes vs text classifier".into(),
                expected: meta.class_count,
                found: text_weights.rows(),
            });
        }
        let keys = read_feature_file(dir.join(KEYS_FILE))?;
        keys.check_labels(meta.class_count)?;
        if keys.dim() != text_weights.dim() {
            return Err(Error::DimensionMismatch {
                context: "checkpoint keys vs text classifier".into(),
                expected: text_weights.dim(),
                found: keys.dim(),
            });
        }
        text_weights.check_normalized("text classifier", NORM_TOLERANCE)?;
        let labels = keys.labels_usize();
        let adapter = Self {
            keys: keys.to_array(),
            values: one_hot(&labels, meta.class_count),
            labels,
            origin: keys.origin().to_vec(),
            text_weights: text_weights.to_array(),
            beta: meta.beta,
            a: meta.a,
        };
        Ok((adapter, meta))
    }
}
