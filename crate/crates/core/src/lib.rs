//! Few-shot cache-adapter training over frozen vision-language embeddings.
//!
//! Support features (real and diffusion-augmented) populate a key-value cache
//! whose keys are fine-tuned with cross-entropy plus a multi-kernel MMD term
//! that pulls the synthetic features' cache responses toward the real ones.
//!
//! Layout:
//! - [`feature_store`]: the `CAPF` feature file format, manifests, episode
//!   sampling and the synthetic cluster dataset used as a test oracle.
//! - [`kernels`]: Gaussian kernels, the biased MMD estimator, its gradient and
//!   an independent brute-force oracle plus permutation test.
//! - [`cache_adapter`]: the cache model and its logits.
//! - [`trainer`]: losses, manual backprop, AdamW with cosine schedule.
//! - [`evaluator`]: accuracy metrics and ablation sweeps.
//! - [`cli`]: the `cap2aug` command line.

pub mod cache_adapter;
pub mod cli;
pub mod error;
pub mod evaluator;
pub mod feature_store;
pub mod kernels;
pub mod trainer;

pub use cache_adapter::CacheAdapter;
pub use error::{Error, Result};
pub use feature_store::{Dataset, DatasetManifest, Episode, FeatureMatrix, Origin};
pub use kernels::{KernelSpec, MmdResult};
pub use trainer::{TrainConfig, TrainRun};
