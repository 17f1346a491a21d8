//! Minimal deterministic network engine.
//!
//! Everything is `f64`. Layers cache what their backward pass needs; there is
//! no general autodiff graph, the model wires the backward calls by hand.

mod activation;
mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod matrix;
mod optim;

pub use activation::Activation;
pub use dense::{DenseLayer, Init};
pub use dropout::{dropout_forward, DropoutSpec, Mode};
pub use loss::{
    batch_cross_entropy, check_simplex, cross_entropy, softmax, softmax_ce_grad, softmax_rows,
    LOG_EPS, SIMPLEX_TOL,
};
pub use matrix::Matrix;
pub use optim::{AdamW, AdamWConfig, ParamMut};
