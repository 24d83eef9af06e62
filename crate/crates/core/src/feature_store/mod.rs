//! Feature matrices, the `CAPF` file format, dataset manifests and episode
//! sampling.

mod episode;
mod format;
mod manifest;
mod matrix;
mod synth;

pub use episode::{sample_episode, subsample_synthetic, Episode};
pub use format::{decode_feature_file, encode_feature_file, read_feature_file, write_feature_file};
pub use format::{HEADER_LEN, MAGIC, VERSION};
pub use manifest::{Dataset, DatasetManifest, SplitEntry};
pub use matrix::{l2_normalize, FeatureMatrix, Origin, MIN_ROW_NORM};
pub use synth::{shift_vector, synth_cluster_dataset, SynthDataset, SynthParams};
