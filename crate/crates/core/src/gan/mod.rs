//! Adversarial training support: a conditional discriminator over
//! candidate/LR-upsample pairs, the real/fake objectives, and the
//! discriminator-feature perceptual loss.

pub mod discriminator;
pub mod loss;

pub use discriminator::{bicubic_condition, concat_condition, DiscOutput, Discriminator};
pub use loss::{
    disc_logit_grads, disc_loss, discriminator_step_grads, gen_adv_logit_grad, gen_adv_loss,
    generator_adversarial_terms, perceptual_feature_grad, perceptual_loss, AdvTerms, DiscStep,
    GAMMA_ADV, GAMMA_PERC, PROB_CLAMP,
};
