//! Spatio-temporal graph convolutional forecasters: temporal gated
//! convolutions around a Chebyshev graph convolution, optionally with a
//! temporal-attention branch per block.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod network;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use layers::{
    plain_block_forward, sgc_forward, stconv_block_forward, tam_forward, tgc_forward, BlockActivations, BlockParams,
    BlockVars, TgcParams,
};
pub use network::{StgcnModel, ADJ_E1, ADJ_E2, ADJ_WEIGHT};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
