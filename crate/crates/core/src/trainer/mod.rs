//! Fine-tuning of the cache keys under `L = L_CE + α · L_MMD`.

mod config;
mod gradcheck;
mod loss;
mod optim;
mod train;

pub use config::TrainConfig;
pub use gradcheck::{grad_check, grad_check_with, GradCheckInstance, GradCheckProblem, GradCheckReport, REL_ERR_FLOOR};
pub use loss::{cross_entropy, loss_and_grad, objective, LossGrad};
pub use optim::{cosine_lr, AdamW};
pub use train::{train, train_episode, train_with_observer, EpochRecord, TrainRun, TrainSet};
