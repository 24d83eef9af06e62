//! Accuracy metrics, long-tail group accuracy and ablation sweeps.

mod metrics;
mod sweep;

use std::path::Path;

pub use metrics::{
    accuracy_percent, evaluate, evaluate_with_groups, group_accuracy, predict, EvalReport, GroupAccuracy, GroupStat,
    FEW_SHOT_BELOW, MANY_SHOT_ABOVE,
};
pub use sweep::{alpha_ablation, shot_sweep, synth_count_ablation, SweepCell, SweepOptions, SweepTable};

use crate::cache_adapter::CacheAdapter;
use crate::error::Result;
use crate::feature_store::{write_feature_file, FeatureMatrix};

/// Writes the cache-model embeddings of `data` as a `CAPF` file for external
/// projection tools. Returns the matrix that was written.
pub fn export_embeddings(
    adapter: &CacheAdapter,
    data: &FeatureMatrix,
    path: impl AsRef<Path>,
) -> Result<FeatureMatrix> {
    let emb = adapter.mmd_embedding(&data.to_array())?;
    let out = FeatureMatrix::from_array(&emb, data.labels().to_vec(), data.origin().to_vec())?;
    write_feature_file(&out, path)?;
    Ok(out)
}
