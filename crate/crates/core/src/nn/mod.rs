//! Minimal dense-tensor numerical core with reverse-mode differentiation:
//! enough for GRU encoder-decoder training with attention, plus the
//! deterministic RNG streams, SGD, checkpointing, and gradient checking that
//! the rest of the crate builds on.

pub mod blocks;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod params;
pub mod rng;
pub mod tensor;

pub use blocks::{register_affine, register_attention, register_gru, AffineNodes, AttentionNodes, GruNodes};
pub use checkpoint::{load_params, save_params};
pub use gradcheck::{grad_check, GradReport};
pub use graph::{log_softmax_at, sigmoid, softmax_slice, Graph, NodeId};
pub use params::ParamStore;
pub use rng::RngStream;
pub use tensor::Tensor;
