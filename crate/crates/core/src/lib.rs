//! Core library for facial-attribute capsule super-resolution: image
//! handling and degradation models, a small CPU neural-network substrate
//! with hand-written backpropagation, the capsule generation network and its
//! ablation variants, the conditional discriminator, and the training loop.
//!
//! Everything numeric is generic over [`scalar::Scalar`], so the same code
//! runs in `f32` for training and in `f64` for finite-difference gradient
//! verification. The crate-root aliases pin the two roles:
//!
//! - [`TrainF`] (`f32`) for training, evaluation, and checkpoints;
//! - [`CheckF`] (`f64`) for gradient checks.

pub mod error;
pub mod gan;
pub mod gradsuite;
pub mod image;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by ordinary training and evaluation runs.
pub type TrainF = f32;

/// Wider scalar used by the finite-difference gradient checks, where `f32`
/// rounding would drown out the comparison.
pub type CheckF = f64;
