use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::Dataset;
use super::matrix::{l2_normalize, FeatureMatrix, Origin};
use crate::error::{Error, Result};

/// An N-way K-shot task drawn from a [`Dataset`].
///
/// Labels inside every matrix are episode-local: label `i` refers to
/// `class_ids[i]` in the dataset. All matrices are L2-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub class_ids: Vec<usize>,
    pub class_names: Vec<String>,
    pub support_real: FeatureMatrix,
    pub support_synthetic: FeatureMatrix,
    /// Every test row whose class is in the episode.
    pub query: FeatureMatrix,
    /// Text classifier rows of the episode classes, in episode label order.
    pub text_weights: FeatureMatrix,
    /// Rows of `Dataset::train` behind `support_real`, in order.
    pub real_indices: Vec<usize>,
    /// Rows of `Dataset::train` behind `support_synthetic`, in order.
    pub synthetic_indices: Vec<usize>,
    pub n_way: usize,
    pub k_shot: usize,
    pub seed: u64,
}

impl Episode {
    /// Real followed by synthetic support rows: the full cache content.
    pub fn combined_support(&self) -> FeatureMatrix {
        FeatureMatrix::concat(&[&self.support_real, &self.support_synthetic])
            .expect("episode matrices share a dimension")
    }
}

/// Draws `n_way` classes and `k_shot` real rows per class with a generator
/// seeded by `seed`. All synthetic rows of the drawn classes join the support.
/// The query is the full test split restricted to the drawn classes.
pub fn sample_episode(data: &Dataset, n_way: usize, k_shot: usize, seed: u64) -> Result<Episode> {
    if k_shot < 2 {
        return Err(Error::TooFewShots(k_shot));
    }
    let n_classes = data.num_classes();
    if n_way == 0 || n_way > n_classes {
        return Err(Error::InvalidConfig(format!(
            "n_way {n_way} must be in 1..={n_classes}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_ids: Vec<usize> = if n_way == n_classes {
        (0..n_classes).collect()
    } else {
        let mut ids = index::sample(&mut rng, n_classes, n_way).into_vec();
        ids.sort_unstable();
        ids
    };

    let mut by_class_real = vec![Vec::new(); n_classes];
    let mut by_class_synth = vec![Vec::new(); n_classes];
    for i in 0..data.train.rows() {
        let c = data.train.labels()[i] as usize;
        match data.train.origin()[i] {
            Origin::Real => by_class_real[c].push(i),
            Origin::Synthetic => by_class_synth[c].push(i),
        }
    }
    for &c in &class_ids {
        if by_class_real[c].len() < k_shot {
            return Err(Error::InsufficientShots {
                class: data.manifest.classes[c].clone(),
                available: by_class_real[c].len(),
                requested: k_shot,
            });
        }
    }

    let mut local = vec![u32::MAX; n_classes];
    for (i, &c) in class_ids.iter().enumerate() {
        local[c] = i as u32;
    }

    let mut real_indices = Vec::with_capacity(n_way * k_shot);
    let mut synthetic_indices = Vec::new();
    for &c in &class_ids {
        let pool = &by_class_real[c];
        let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), k_shot)
            .into_iter()
            .map(|j| pool[j])
            .collect();
        picked.sort_unstable();
        real_indices.extend(picked);
        synthetic_indices.extend_from_slice(&by_class_synth[c]);
    }

    let relabel = |m: FeatureMatrix| -> Result<FeatureMatrix> {
        let labels = m.labels().iter().map(|&l| local[l as usize]).collect();
        l2_normalize(&m.with_labels(labels)?)
    };
    let query_rows: Vec<usize> = (0..data.test.rows())
        .filter(|&i| local[data.test.labels()[i] as usize] != u32::MAX)
        .collect();
    let text_rows = data.text_weights.select(&class_ids);
    let text_labels = (0..n_way as u32).collect();

    Ok(Episode {
        class_names: class_ids.iter().map(|&c| data.manifest.classes[c].clone()).collect(),
        support_real: relabel(data.train.select(&real_indices))?,
        support_synthetic: relabel(data.train.select(&synthetic_indices))?,
        query: relabel(data.test.select(&query_rows))?,
        text_weights: l2_normalize(&text_rows.with_labels(text_labels)?)?,
        class_ids,
        real_indices,
        synthetic_indices,
        n_way,
        k_shot,
        seed,
    })
}

/// Keeps `per_class` synthetic rows per episode class, chosen by a seeded
/// uniform draw. `per_class == 0` removes the synthetic support entirely.
pub fn subsample_synthetic(episode: &Episode, per_class: usize, seed: u64) -> Result<Episode> {
    let synth = &episode.support_synthetic;
    let mut by_class = vec![Vec::new(); episode.n_way];
    for (i, &l) in synth.labels().iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(per_class * episode.n_way);
    for (c, rows) in by_class.iter().enumerate() {
        if rows.len() < per_class {
            return Err(Error::InsufficientSynthetic {
                class: episode.class_names[c].clone(),
                available: rows.len(),
                requested: per_class,
            });
        }
        let mut picked: Vec<usize> = index::sample(&mut rng, rows.len(), per_class)
            .into_iter()
            .map(|j| rows[j])
            .collect();
        picked.sort_unstable();
        keep.extend(picked);
    }
    let mut out = episode.clone();
    out.support_synthetic = synth.select(&keep);
    out.synthetic_indices = keep.iter().map(|&i| episode.synthetic_indices[i]).collect();
    Ok(out)
}
