//! Facial attribute capsule network for face super-resolution: a coarse
//! pre-upsampling network brings the LR input to target resolution, an
//! encoder condenses it to a 2x2 feature map, capsule heads turn that into
//! semantic/probabilistic attribute capsules (or classic routed capsules in
//! the v3 ablation), and a decoder reconstructs the HR image. Ablation
//! variants drop individual branches; see [`ModelVariant`].

pub mod cgb;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod facn;
pub mod heads;
pub mod loss;
pub mod presr;
pub mod routing;

pub use cgb::{
    activate_semantic, assemble_fac, kl_divergence, reparameterize, shift_mean, split_fac,
    split_gaussian, LOG_VAR_MAX, LOG_VAR_MIN, NORM_FLOOR,
};
pub use config::{
    ModelConfig, ModelVariant, DF_SPATIAL, HIDDEN_CHANNELS, V3_PRIMARY_DIM,
};
pub use decoder::Decoder;
pub use encoder::{encoder_strides, Encoder};
pub use facn::{Facn, FacnForward, OutputGrads};
pub use heads::CapsHead;
pub use loss::{mse, reconstruction_grads, reconstruction_loss, SampleLoss, LAMBDA_ATTR};
pub use presr::PreSr;
pub use routing::{squash, RoutingBlock, ROUTING_ITERATIONS};
