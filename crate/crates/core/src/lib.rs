//! Sparse feedforward networks trained with stochastic proximal gradient
//! descent under the integrated transformed-L1 regularizer
//! `mu_l * TL1(W) + (1 - mu_l) * sum_g ||W_g||_2`.
//!
//! * [`penalties`]: value functions of common sparsity penalties.
//! * [`prox`]: closed-form proximal operators (TL1, group, L1).
//! * [`oracle`]: brute-force reference used to check the TL1 prox.
//! * [`nn`]: dense/convolutional network with exact gradients.
//! * [`trainer`]: the proximal SGD/Adam training loop.
//! * [`metrics`]: sparsity, neuron removal, FLOP, and accuracy accounting.
//! * [`data`]: IDX and CSV loaders, one-hot encoding, synthetic data.
//! * [`cli`]: the `sparseprox` command-line driver.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod numfmt;
pub mod oracle;
pub mod penalties;
pub mod prox;
pub mod trainer;

pub use error::{Error, Result};
