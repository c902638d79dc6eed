//! Layers, losses, manual backpropagation, Adam, and the competitive
//! overcomplete output head.
//!
//! Layers are pure: parameters live in the layer, activations needed by the
//! backward pass live in a [`Trace`] returned by `forward_traced`. Training
//! mode is therefore `forward_traced` + `backward`; evaluation mode is plain
//! `forward`. Because backward takes the trace by reference, backprop through
//! a frozen model needs no mutable access at all.

pub mod adam;
pub mod cool;
pub mod layers;
pub mod loss;

pub use adam::{Adam, AdamParams};
pub use cool::{cool_forward, CoolHead};
pub use layers::{softmax_rows, Conv2d, Dense, Layer, LayerCache, LayerGrads, LayerStack, StackGrads, Trace};
pub use loss::{
    cross_entropy_grad_indices, cross_entropy_grad_onehot, cross_entropy_indices,
    cross_entropy_onehot, mse_grad, mse_per_sample, PROB_FLOOR,
};
