use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::read_feature_file;
use super::matrix::{FeatureMatrix, Origin};
use crate::error::{Error, Result};

pub const TRAIN_SPLIT: &str = "train";
pub const TEST_SPLIT: &str = "test";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub file: String,
    /// When present, every row of the file must carry this origin tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

/// JSON manifest. Class order defines label indices everywhere downstream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub text_classifier: String,
    pub splits: BTreeMap<String, Vec<SplitEntry>>,
    pub synthetic_per_class: usize,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A manifest with all of its feature files loaded and cross-validated.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Hex SHA-256 of the manifest file bytes.
    pub manifest_hash: String,
    /// All training rows, real and synthetic, in manifest file order.
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    /// One row per class, in class order.
    pub text_weights: FeatureMatrix,
}

impl Dataset {
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let hash = hex::encode(Sha256::digest(&bytes));
        Self::from_manifest(manifest, &base, hash)
    }

    /// Loads the files referenced by `manifest`, resolving relative paths
    /// against `base`.
    pub fn from_manifest(manifest: DatasetManifest, base: &Path, manifest_hash: String) -> Result<Self> {
        if manifest.classes.is_empty() {
            return Err(Error::Manifest("no classes declared".into()));
        }
        let n_classes = manifest.classes.len();
        let resolve = |f: &str| -> PathBuf {
            let p = Path::new(f);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };

        let text_weights = read_feature_file(resolve(&manifest.text_classifier))?;
        if text_weights.rows() != n_classes {
            return Err(Error::DimensionMismatch {
                context: "text classifier rows vs classes".into(),
                expected: n_classes,
                found: text_weights.rows(),
            });
        }
        let dim = text_weights.dim();

        let load_split = |name: &str| -> Result<FeatureMatrix> {
            let entries = manifest
                .splits
                .get(name)
                .ok_or_else(|| Error::Manifest(format!("missing split `{name}`")))?;
            let mut parts = Vec::with_capacity(entries.len());
            for entry in entries {
                let m = read_feature_file(resolve(&entry.file))?;
                if m.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        context: format!("file {}", entry.file),
                        expected: dim,
                        found: m.dim(),
                    });
                }
                m.check_labels(n_classes)?;
                if let Some(want) = entry.origin {
                    if let Some(row) = m.origin().iter().position(|&o| o != want) {
                        return Err(Error::Manifest(format!(
                            "file {} row {row} has origin {:?}, manifest says {want:?}",
                            entry.file,
                            m.origin()[row]
                        )));
                    }
                }
                parts.push(m);
            }
            let refs: Vec<&FeatureMatrix> = parts.iter().collect();
            if refs.is_empty() {
                Ok(FeatureMatrix::empty(dim))
            } else {
                FeatureMatrix::concat(&refs)
            }
        };

        let train = load_split(TRAIN_SPLIT)?;
        let test = load_split(TEST_SPLIT)?;
        Ok(Self {
            manifest,
            manifest_hash,
            train,
            test,
            text_weights,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.text_weights.dim()
    }

    fn count_per_class(&self, origin: Origin) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for (l, o) in self.train.labels().iter().zip(self.train.origin()) {
            if *o == origin {
                counts[*l as usize] += 1;
            }
        }
        counts
    }

    /// Real training rows per class.
    pub fn shots_available(&self) -> Vec<usize> {
        self.count_per_class(Origin::Real)
    }

    pub fn synthetic_available(&self) -> Vec<usize> {
        self.count_per_class(Origin::Synthetic)
    }
}
