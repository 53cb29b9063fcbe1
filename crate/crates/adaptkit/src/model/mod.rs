//! Toy decoder-only causal LM: pre-norm blocks with rotary-position
//! causal attention and a gated FFN, untied embedding and head,
//! hand-written exact gradients, and low-rank adapters.

mod config;
mod forward;
pub mod lora;
mod params;

pub use config::ModelConfig;
pub use forward::{backward, forward_loss};
pub use lora::{lora_attach, lora_merge, Adapter, LoraConfig, LoraState};
pub use params::{
    block_tensor_names, build_model, Block, GradTensor, Gradients, ModelParams, TensorMut,
    TensorRef, INIT_SIGMA,
};
