//! A small, self-contained neural-network stack built around a
//! denoising-autoencoder confidence score.
//!
//! The library trains classifiers jointly with a denoising autoencoder and
//! uses the autoencoder's reconstruction error together with an estimate of
//! the log-density curvature to decide whether an input lies near the
//! training distribution. The score multiplies the classifier's posteriors,
//! which gives the model an implicit reject option against out-of-distribution
//! inputs and gradient-crafted fooling images.
//!
//! Everything numeric is generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`). Experiments and the CLI use `f64`; the concrete
//! aliases at the crate root ([`Tensor64`], [`Rng`], ...) are the types
//! most callers want.
//!
//! Module map:
//! - [`tensor`], [`rng`]: dense row-major tensors and a seedable xoshiro RNG.
//! - [`nn`]: layers, losses, manual backprop, Adam, and the COOL output layer.
//! - [`dae`]: denoising autoencoder training and the confidence score.
//! - [`classifier`]: joint classifier + autoencoder models and predictions.
//! - [`fooling`]: the fooling-generator-network attack harness.
//! - [`eval`]: dataset generators and the open-set / 1-class / 2D protocols.
//! - [`io`]: IDX parsing, checkpoints, SVG/PGM/CSV emission.
//! - [`runner`]: declarative experiment configs and the experiment runner.

pub mod classifier;
pub mod dae;
pub mod error;
pub mod eval;
pub mod fooling;
pub mod gradcheck;
pub mod io;
pub mod nn;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;

/// Default scalar for experiments; gradient checking needs f64 headroom.
pub type Real = f64;
/// `f64` tensor, the type used by every experiment entry point.
pub type Tensor64 = tensor::Tensor<f64>;
/// `f32` tensor for callers that trade precision for footprint.
pub type Tensor32 = tensor::Tensor<f32>;
/// Joint model over `f64`.
pub type JointModel64 = classifier::JointModel<f64>;
