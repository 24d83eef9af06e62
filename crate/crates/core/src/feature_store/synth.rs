//! Gaussian cluster dataset standing in for encoder-extracted features.
//!
//! Each class has a unit-norm mean. Real rows are drawn around the mean,
//! synthetic rows around the mean plus a shared domain shift, and every row
//! is renormalized. The text classifier is the matrix of class means, so the
//! zero-shot baseline is well defined.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::format::write_feature_file;
use super::manifest::{Dataset, DatasetManifest, SplitEntry, TEST_SPLIT, TRAIN_SPLIT};
use super::matrix::{FeatureMatrix, Origin};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub n_way: usize,
    /// Real training rows per class.
    pub k_shot: usize,
    /// Synthetic training rows per class.
    pub k_synth: usize,
    pub dim: usize,
    /// Added to every class mean before drawing synthetic rows.
    pub domain_shift: Vec<f64>,
    /// Per-coordinate standard deviation around the class mean.
    pub noise: f64,
    pub test_per_class: usize,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(n_way: usize, k_shot: usize, k_synth: usize, dim: usize, seed: u64) -> Self {
        Self {
            n_way,
            k_shot,
            k_synth,
            dim,
            domain_shift: vec![0.0; dim],
            noise: 0.1,
            test_per_class: 50,
            seed,
        }
    }

    pub fn with_shift(mut self, domain_shift: Vec<f64>) -> Self {
        self.domain_shift = domain_shift;
        self
    }

    /// Shift of the given Euclidean norm along a seeded random direction.
    pub fn with_shift_norm(self, norm: f64) -> Self {
        let shift = shift_vector(self.dim, norm, self.seed ^ 0x5348_4946_5421);
        self.with_shift(shift)
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_test_per_class(mut self, n: usize) -> Self {
        self.test_per_class = n;
        self
    }
}

/// In-memory oracle dataset; [`SynthDataset::write`] persists it.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub classes: Vec<String>,
    pub real: FeatureMatrix,
    pub synthetic: FeatureMatrix,
    pub test: FeatureMatrix,
    pub text_weights: FeatureMatrix,
    pub class_means: Vec<Vec<f64>>,
}

pub fn shift_vector(dim: usize, norm: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n * norm).collect();
        }
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn draw_rows(rng: &mut ChaCha8Rng, center: &[f64], noise: f64, count: usize, out: &mut Vec<f32>) {
    for _ in 0..count {
        let row: Vec<f64> = center
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(rng);
                c + noise * z
            })
            .collect();
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        out.extend(row.iter().map(|x| (x / n) as f32));
    }
}

pub fn synth_cluster_dataset(p: &SynthParams) -> Result<SynthDataset> {
    if p.dim < 2 {
        return Err(Error::InvalidConfig(format!("dim must be >= 2, got {}", p.dim)));
    }
    if p.n_way < 2 {
        return Err(Error::InvalidConfig(format!("n_way must be >= 2, got {}", p.n_way)));
    }
    if p.domain_shift.len() != p.dim {
        return Err(Error::DimensionMismatch {
            context: "domain shift".into(),
            expected: p.dim,
            found: p.domain_shift.len(),
        });
    }
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise must be finite and >= 0, got {}",
            p.noise
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let means: Vec<Vec<f64>> = (0..p.n_way).map(|_| unit_gaussian(&mut rng, p.dim)).collect();

    let mut real = Vec::new();
    let mut synth = Vec::new();
    let mut test = Vec::new();
    for mean in &means {
        let shifted: Vec<f64> = mean.iter().zip(&p.domain_shift).map(|(m, s)| m + s).collect();
        draw_rows(&mut rng, mean, p.noise, p.k_shot, &mut real);
        draw_rows(&mut rng, &shifted, p.noise, p.k_synth, &mut synth);
        draw_rows(&mut rng, mean, p.noise, p.test_per_class, &mut test);
    }

    let build = |data: Vec<f32>, per_class: usize, origin: Origin| {
        let rows = per_class * p.n_way;
        let labels = (0..rows).map(|i| (i / per_class.max(1)) as u32).collect();
        FeatureMatrix::new(rows, p.dim, data, labels, vec![origin; rows])
    };
    let text_data = means.iter().flatten().map(|&v| v as f32).collect();
    Ok(SynthDataset {
        classes: (0..p.n_way).map(|c| format!("class_{c:03}")).collect(),
        real: build(real, p.k_shot, Origin::Real)?,
        synthetic: build(synth, p.k_synth, Origin::Synthetic)?,
        test: build(test, p.test_per_class, Origin::Real)?,
        text_weights: build(text_data, 1, Origin::Real)?,
        class_means: means,
    })
}

const REAL_FILE: &str = "train_real.capf";
const SYNTH_FILE: &str = "train_synthetic.capf";
const TEST_FILE: &str = "test.capf";
const TEXT_FILE: &str = "text_classifier.capf";
pub const MANIFEST_FILE: &str = "manifest.json";

impl SynthDataset {
    pub fn manifest(&self) -> DatasetManifest {
        let mut splits = BTreeMap::new();
        splits.insert(
            TRAIN_SPLIT.to_string(),
            vec![
                SplitEntry {
                    file: REAL_FILE.into(),
                    origin: Some(Origin::Real),
                },
                SplitEntry {
                    file: SYNTH_FILE.into(),
                    origin: Some(Origin::Synthetic),
                },
            ],
        );
        splits.insert(
            TEST_SPLIT.to_string(),
            vec![SplitEntry {
                file: TEST_FILE.into(),
                origin: Some(Origin::Real),
            }],
        );
        DatasetManifest {
            classes: self.classes.clone(),
            text_classifier: TEXT_FILE.into(),
            splits,
            synthetic_per_class: self.synthetic.rows() / self.classes.len(),
        }
    }

    /// Writes the four feature files and `manifest.json` into `dir`,
    /// returning the manifest path.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_feature_file(&self.real, dir.join(REAL_FILE))?;
        write_feature_file(&self.synthetic, dir.join(SYNTH_FILE))?;
        write_feature_file(&self.test, dir.join(TEST_FILE))?;
        write_feature_file(&self.text_weights, dir.join(TEXT_FILE))?;
        let path = dir.join(MANIFEST_FILE);
        self.manifest().write(&path)?;
        Ok(path)
    }

    /// The same content as a loaded [`Dataset`], without touching disk.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let manifest = self.manifest();
        let hash = {
            use sha2::{Digest, Sha256};
            hex::encode(Sha256::digest((manifest.to_json()? + "\n").as_bytes()))
        };
        Ok(Dataset {
            manifest,
            manifest_hash: hash,
            train: FeatureMatrix::concat(&[&self.real, &self.synthetic])?,
            test: self.test.clone(),
            text_weights: self.text_weights.clone(),
        })
    }
}
