//! Multilayer perceptrons with reverse-mode gradients, Adam, and JSON
//! checkpoints. All arithmetic is `f64`.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, LayerRecord, NetworkRecord, FORMAT as CHECKPOINT_FORMAT};
pub use mlp::{
    decoupled_softmax, decoupled_softmax_vjp, Activation, Gradient, Layer, ParamSet, Tape,
};
