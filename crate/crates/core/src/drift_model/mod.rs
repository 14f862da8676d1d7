//! Learned drifts: the MLP, its optimizer, the training loop and checkpoints.

pub mod checkpoint;
pub mod mlp;
pub mod optim;
pub mod train;

pub use checkpoint::Checkpoint;
pub use mlp::{param_count, Activation, LossGradient, NeuralDrift};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use train::{dataset_loss, train, train_resume, TrainConfig, TrainReport, TrainState};
