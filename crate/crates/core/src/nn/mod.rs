//! A small feedforward network: stride-1 convolutions, dense layers, ReLU,
//! softmax with cross-entropy, and exact backpropagation in `f64`.
//!
//! Zero weights are skipped in every accumulation, so a network with
//! zeroed connections computes exactly what the pruned network would.

mod conv;
mod init;
mod layer;
mod matrix;
mod network;

pub use conv::conv2d_forward;
pub use init::{init_weights, InitScheme, NORMAL_RANDOM_STD};
pub use layer::{Activation, Layer, LayerSpec};
pub use matrix::WeightMatrix;
pub use network::{dense, identity_weights, ForwardCache, LayerGradient, NetworkModel, PROBABILITY_FLOOR};
