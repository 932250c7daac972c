//! Multi-task loss, AdamW and the training loop.

pub mod adamw;
pub mod loss;
mod trainer;

pub use adamw::{adamw_update, AdamWConfig, OptimizerState};
pub use loss::{KldDirection, LossComponents, LossWeights, KLD_EPS};
pub use trainer::{
    evaluate_loss, format_log, model_gradient_check, sample_loss, train, EpochLog, Sample, TrainConfig, TrainError,
    LOG_HEADER,
};
