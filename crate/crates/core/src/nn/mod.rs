//! The differentiable-layer substrate: convolutions, fully connected layers,
//! activations, residual and up-sampling blocks, parameter plumbing, a
//! finite-difference gradient checker, and the checkpoint format.
//!
//! Layers own their parameters and forward caches. `forward` records what the
//! matching `backward` needs; `backward` accumulates parameter gradients
//! (callers zero them between batches) and returns the input gradient, so
//! batches can be processed one sample at a time on a single core.

mod activation;
mod checkpoint;
mod conv;
mod gradcheck;
mod linear;
mod param;
mod residual;
mod upsample;

pub use activation::{leaky, sigmoid, LeakyRelu, Sigmoid, LEAKY_SLOPE};
pub use checkpoint::{sha256_hex, BlobInfo, Checkpoint, CheckpointManifest, CHECKPOINT_MAGIC};
pub use conv::{conv_out_len, Conv2d};
pub use gradcheck::{check_gradients, relative_error, CoordError, GradCheckConfig, GradCheckReport};
pub use linear::Linear;
pub use param::{seed_for, HasParams, Parameter};
pub use residual::ResidualBlock;
pub use upsample::{nearest_upsample2x, nearest_upsample2x_backward, UpsampleConv};
