use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::loss_and_grad;
use super::optim::{cosine_lr, AdamW};
use super::TrainConfig;
use crate::cache_adapter::CacheAdapter;
use crate::error::{Error, Result};
use crate::evaluator::accuracy_percent;
use crate::feature_store::{Episode, FeatureMatrix};
use crate::kernels::mmd_biased;

/// Everything a training run consumes.
#[derive(Clone, Debug)]
pub struct TrainSet {
    /// Cache content and CE training rows: real and synthetic support.
    pub support: FeatureMatrix,
    pub text_weights: FeatureMatrix,
    /// MMD source sample (real support features).
    pub mmd_real: Array2<f64>,
    /// MMD target sample (synthetic support features).
    pub mmd_synth: Array2<f64>,
}

impl TrainSet {
    pub fn from_episode(episode: &Episode) -> Self {
        Self {
            support: episode.combined_support(),
            text_weights: episode.text_weights.clone(),
            mmd_real: episode.support_real.to_array(),
            mmd_synth: episode.support_synthetic.to_array(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch cross-entropy over the epoch.
    pub ce_loss: f64,
    /// Mean MMD term over the epoch's steps; 0 when alpha is 0.
    pub mmd_loss: f64,
    pub total_loss: f64,
    /// Support-set accuracy (percent) after the epoch.
    pub train_acc: f64,
    /// MMD between real and synthetic support embeddings after the epoch.
    pub mmd_between_domains: Option<f64>,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    /// MMD between domains before any update.
    pub initial_mmd: Option<f64>,
    pub adapter: CacheAdapter,
    pub wall_time: Duration,
}

impl TrainRun {
    /// One JSON object per line, one line per epoch.
    pub fn history_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.history {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_history(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.history_jsonl()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Final inter-domain MMD, or the initial value when no epoch ran.
    pub fn final_mmd(&self) -> Option<f64> {
        self.history.last().map_or(self.initial_mmd, |r| r.mmd_between_domains)
    }
}

fn domain_mmd(adapter: &CacheAdapter, set: &TrainSet, config: &TrainConfig) -> Result<Option<f64>> {
    if set.mmd_real.nrows() == 0 || set.mmd_synth.nrows() == 0 {
        return Ok(None);
    }
    let r = adapter.mmd_embedding(&set.mmd_real)?;
    let s = adapter.mmd_embedding(&set.mmd_synth)?;
    Ok(Some(mmd_biased(&r, &s, &config.kernel)?.value))
}

pub fn train(set: &TrainSet, config: &TrainConfig) -> Result<TrainRun> {
    train_with_observer(set, config, |_, _| Ok(()))
}

pub fn train_episode(episode: &Episode, config: &TrainConfig) -> Result<TrainRun> {
    train(&TrainSet::from_episode(episode), config)
}

/// Runs training, calling `observer(epoch, adapter)` once before the first
/// update (epoch 0) and after every epoch.
pub fn train_with_observer(
    set: &TrainSet,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, &CacheAdapter) -> Result<()>,
) -> Result<TrainRun> {
    let started = Instant::now();
    config.validate()?;
    if set.support.is_empty() {
        return Err(Error::EmptyInput("training support"));
    }
    if config.alpha > 0.0 && set.mmd_synth.nrows() == 0 {
        return Err(Error::EmptySyntheticWithAlpha);
    }
    if config.alpha > 0.0 && set.mmd_real.nrows() == 0 {
        return Err(Error::EmptyInput("real support for MMD"));
    }

    let mut adapter = CacheAdapter::init_from_support(&set.support, &set.text_weights, config.beta, config.a)?;
    let features = set.support.to_array();
    let labels = set.support.labels_usize();
    let rows = features.nrows();
    let steps_per_epoch = rows.div_ceil(config.batch_size);
    let total_steps = config.epochs * steps_per_epoch;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(adapter.keys().dim(), config);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;
    let initial_mmd = domain_mmd(&adapter, set, config)?;
    observer(0, &adapter)?;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut ce_sum, mut mmd_sum, mut lr) = (0.0, 0.0, config.lr0);
        for chunk in order.chunks(config.batch_size) {
            let batch = features.select(Axis(0), chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let lg = loss_and_grad(&adapter, &set.mmd_real, &set.mmd_synth, &batch, &batch_labels, config)?;
            lr = cosine_lr(step, total_steps, config.lr0, config.eta_min);
            opt.step(adapter.keys_mut(), &lg.d_keys, lr);
            ce_sum += lg.ce;
            mmd_sum += lg.mmd.unwrap_or(0.0);
            step += 1;
        }
        let ce_loss = ce_sum / steps_per_epoch as f64;
        let mmd_loss = mmd_sum / steps_per_epoch as f64;
        let logits = adapter.full_logits(&features)?;
        history.push(EpochRecord {
            epoch,
            ce_loss,
            mmd_loss,
            total_loss: ce_loss + config.alpha * mmd_loss,
            train_acc: accuracy_percent(&logits, &labels),
            mmd_between_domains: domain_mmd(&adapter, set, config)?,
            lr,
        });
        log::debug!("epoch {epoch}: {:?}", history.last());
        observer(epoch, &adapter)?;
    }

    Ok(TrainRun {
        config: config.clone(),
        history,
        initial_mmd,
        adapter,
        wall_time: started.elapsed(),
    })
}
