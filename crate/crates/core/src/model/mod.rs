//! The pose-to-dynamics network and its ablation variants.

mod checkpoint;
mod config;
mod footformer;
pub mod layers;
mod params;

use thiserror::Error;

use crate::tensor::TensorError;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use config::{Activation, EncoderKind, ModelConfig, PoolingKind, TemporalKind};
pub use footformer::{
    add_positional_encoding, attention_pool, gcn_encode, FootFormer, ForwardVars, ModelOutput, PoseSequence,
};
pub use layers::build_temporal_mask;
pub use params::{glorot, normal, Bound, ParamStore};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("checkpoint is missing parameter {0}")]
    MissingParameter(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
