//! Policy networks, the clipped-surrogate trainer and checkpoints.

pub mod checkpoint;
pub mod mlp;
pub mod ppo;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_meta, save_checkpoint, CheckpointMeta};
pub use mlp::Mlp;
pub use ppo::{observation_scale, GaussianPolicy, PpoConfig, PpoTrainer, UpdateStats};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },
    #[error("record called without a preceding act")]
    NoPendingAction,
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
