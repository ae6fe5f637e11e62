//! The full generator: coarse pre-upsampling network, encoder, capsule
//! generation (or dynamic routing for the v3 ablation), and reconstruction
//! decoder, wired together per model variant with a hand-written backward
//! pass mirroring the forward graph exactly.

use ndarray::{Array1, Array2, Array3, Ix1};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::cgb::{
    activate_semantic, activate_semantic_backward, assemble_fac, kl_divergence,
    kl_divergence_backward, reparameterize, reparameterize_backward, shift_mean, split_fac,
    split_gaussian, split_gaussian_backward,
};
use crate::model::config::{ModelConfig, ModelVariant, DF_SPATIAL, HIDDEN_CHANNELS};
use crate::model::decoder::Decoder;
use crate::model::encoder::Encoder;
use crate::model::heads::CapsHead;
use crate::model::presr::PreSr;
use crate::model::routing::RoutingBlock;
use crate::nn::{HasParams, Parameter, Sigmoid};
use crate::scalar::Scalar;

/// Everything one forward pass produces: the two reconstructions the losses
/// compare against ground truth, the distribution statistics, and the
/// intermediates the backward pass re-reads.
#[derive(Debug, Clone)]
pub struct FacnForward<S> {
    /// Coarse reconstruction from the pre-upsampling network, `(3, hr, hr)`.
    pub y_p: Array3<S>,
    /// Final reconstruction, `(3, hr, hr)`.
    pub y_hat: Array3<S>,
    /// Attribute activations in `(0, 1)`, length `k`; absent for v3.
    pub a_tt: Option<Array1<S>>,
    /// Unshifted Gaussian mean, length `k`; present when the variant has a
    /// probabilistic branch (full, v2).
    pub mu: Option<Array1<S>>,
    /// Clamped log-variance, length `k`; present alongside `mu`.
    pub log_var: Option<Array1<S>>,
    /// KL divergence of `N(mu, sigma^2)` from the standard normal; zero for
    /// variants without the probabilistic branch.
    pub kl: S,
    /// Capsule vector fed to the decoder.
    pub fac: Array1<S>,
    // Intermediates for backward.
    c_pr: Option<Array2<S>>,
    pin_raw: Option<Array1<S>>,
    eps: Option<Array1<S>>,
}

/// Gradients flowing into the generator outputs, assembled by the loss
/// layer. Paths that a variant lacks are simply ignored.
#[derive(Debug, Clone)]
pub struct OutputGrads<S> {
    /// Gradient of the loss with respect to the final reconstruction.
    pub d_y_hat: Array3<S>,
    /// Gradient with respect to the coarse reconstruction (its own MSE
    /// term), not counting what flows back through the encoder.
    pub d_y_p: Array3<S>,
    /// Gradient with respect to the attribute activations from direct
    /// supervision, length `k` (zero beyond the supervised prefix).
    pub d_a_tt: Option<Array1<S>>,
    /// Upstream scalar multiplying the KL term.
    pub kl_scale: S,
}

impl<S: Scalar> OutputGrads<S> {
    /// Gradients for a pure reconstruction objective on `y_hat` only.
    pub fn from_d_y_hat(d_y_hat: Array3<S>) -> Self {
        let dim = d_y_hat.dim();
        OutputGrads { d_y_hat, d_y_p: Array3::zeros(dim), d_a_tt: None, kl_scale: S::zero() }
    }
}

/// Facial attribute capsule generator for one sample at a time.
#[derive(Debug)]
pub struct Facn<S> {
    cfg: ModelConfig,
    presr: PreSr<S>,
    encoder: Encoder<S>,
    sen: Option<CapsHead<S>>,
    aan: Option<CapsHead<S>>,
    aan_sig: Sigmoid<S, Ix1>,
    pin: Option<CapsHead<S>>,
    routing: Option<RoutingBlock<S>>,
    decoder: Decoder<S>,
}

impl<S: Scalar> Facn<S> {
    pub fn new(cfg: &ModelConfig, master_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (k, d) = (cfg.k, cfg.d);
        let sen = cfg
            .variant
            .has_semantic()
            .then(|| CapsHead::new("gen.sen", k * d, master_seed));
        let aan = cfg
            .variant
            .has_attributes()
            .then(|| CapsHead::new("gen.aan", k, master_seed));
        let pin = cfg
            .variant
            .has_probabilistic()
            .then(|| CapsHead::new("gen.pin", 2 * k, master_seed));
        let routing = (cfg.variant == ModelVariant::V3)
            .then(|| RoutingBlock::new("gen.route", cfg.df_len(), k, d, master_seed));
        Ok(Facn {
            cfg: cfg.clone(),
            presr: PreSr::new("gen.presr", cfg.lr_size(), cfg.scale, master_seed),
            encoder: Encoder::new("gen.enc", cfg.hr_size, master_seed),
            sen,
            aan,
            aan_sig: Sigmoid::new(),
            pin,
            routing,
            decoder: Decoder::new("gen.dec", cfg.caps_len(), cfg.hr_size, master_seed),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Run the generator on one LR image. `eps` is the reparameterization
    /// noise, length `k`; pass `None` for the deterministic mean (used at
    /// evaluation time). Variants without the probabilistic branch ignore it.
    pub fn forward(&mut self, x_lr: &Image<S>, eps: Option<&Array1<S>>) -> Result<FacnForward<S>> {
        let k = self.cfg.k;
        let y_p = self.presr.forward(x_lr)?;
        let df = self.encoder.forward(&y_p)?;

        if self.cfg.variant == ModelVariant::V3 {
            let flat = df
                .into_shape_with_order(self.cfg.df_len())
                .expect("encoder output is standard layout");
            let routed = self.routing.as_mut().expect("v3 has routing").forward(&flat)?;
            let fac = routed
                .into_shape_with_order(k * self.cfg.d)
                .expect("routed capsules are standard layout");
            let y_hat = self.decoder.forward(&fac)?;
            return Ok(FacnForward {
                y_p,
                y_hat,
                a_tt: None,
                mu: None,
                log_var: None,
                kl: S::zero(),
                fac,
                c_pr: None,
                pin_raw: None,
                eps: None,
            });
        }

        let a_raw = self.aan.as_mut().expect("variant has attributes").forward(&df)?;
        let a_tt = self.aan_sig.forward(&a_raw);

        let (c_s, c_pr) = match &mut self.sen {
            Some(sen) => {
                let c_pr = sen
                    .forward(&df)?
                    .into_shape_with_order((k, self.cfg.d))
                    .expect("head output is standard layout");
                (Some(activate_semantic(&c_pr, &a_tt)?), Some(c_pr))
            }
            None => (None, None),
        };

        let (c_p, mu, log_var, kl, pin_raw, eps_used) = match &mut self.pin {
            Some(pin) => {
                let raw = pin.forward(&df)?;
                let (mu, log_var) = split_gaussian(&raw, k)?;
                let eps_used = match eps {
                    Some(e) => {
                        if e.len() != k {
                            return Err(Error::invalid(format!(
                                "noise length {} does not match k = {k}",
                                e.len()
                            )));
                        }
                        e.clone()
                    }
                    None => Array1::zeros(k),
                };
                let mu_hat = shift_mean(&mu, &a_tt)?;
                let c_p = reparameterize(&mu_hat, &log_var, &eps_used)?;
                let kl = kl_divergence(&mu, &log_var)?;
                (Some(c_p), Some(mu), Some(log_var), kl, Some(raw), Some(eps_used))
            }
            None => (None, None, None, S::zero(), None, None),
        };

        let fac = match (&c_s, &c_p) {
            (Some(c_s), Some(c_p)) => assemble_fac(c_s, c_p)?,
            (Some(c_s), None) => c_s
                .clone()
                .into_shape_with_order(k * self.cfg.d)
                .expect("capsules are standard layout"),
            (None, Some(c_p)) => c_p.clone(),
            (None, None) => unreachable!("every variant produces capsules"),
        };
        let y_hat = self.decoder.forward(&fac)?;
        Ok(FacnForward {
            y_p,
            y_hat,
            a_tt: Some(a_tt),
            mu,
            log_var,
            kl,
            fac,
            c_pr,
            pin_raw,
            eps: eps_used,
        })
    }

    /// Backpropagate the loss gradients through every branch, accumulating
    /// parameter gradients. `fwd` must come from the immediately preceding
    /// `forward` call (the layers' internal caches are consumed).
    pub fn backward(&mut self, fwd: &FacnForward<S>, grads: &OutputGrads<S>) -> Result<()> {
        let k = self.cfg.k;
        let d = self.cfg.d;
        let d_fac = self.decoder.backward(&grads.d_y_hat)?;

        let d_df = if self.cfg.variant == ModelVariant::V3 {
            let d_routed = d_fac
                .into_shape_with_order((k, d))
                .expect("capsule gradient is standard layout");
            let d_flat = self.routing.as_mut().expect("v3 has routing").backward(&d_routed)?;
            d_flat
                .into_shape_with_order((HIDDEN_CHANNELS, DF_SPATIAL, DF_SPATIAL))
                .expect("flat gradient is standard layout")
        } else {
            let (d_c_s, d_c_p) = match self.cfg.variant {
                ModelVariant::Full => {
                    let (s, p) = split_fac(&d_fac, k, d)?;
                    (Some(s), Some(p))
                }
                ModelVariant::V1 => (
                    Some(
                        d_fac
                            .into_shape_with_order((k, d))
                            .expect("capsule gradient is standard layout"),
                    ),
                    None,
                ),
                ModelVariant::V2 => (None, Some(d_fac)),
                ModelVariant::V3 => unreachable!(),
            };

            let a_tt = fwd.a_tt.as_ref().expect("variant has attributes");
            // Attribute gradient accumulates from up to three paths before
            // the sigmoid: supervision, semantic activation, mean shift.
            let mut d_a = match &grads.d_a_tt {
                Some(g) => {
                    if g.len() != k {
                        return Err(Error::invalid(format!(
                            "attribute gradient length {} does not match k = {k}",
                            g.len()
                        )));
                    }
                    g.clone()
                }
                None => Array1::zeros(k),
            };

            let mut d_df = Array3::zeros((HIDDEN_CHANNELS, DF_SPATIAL, DF_SPATIAL));

            if let Some(d_c_p) = d_c_p {
                let pin = self.pin.as_mut().expect("variant has probabilistic branch");
                let log_var = fwd.log_var.as_ref().expect("pin ran");
                let mu = fwd.mu.as_ref().expect("pin ran");
                let eps = fwd.eps.as_ref().expect("pin ran");
                let pin_raw = fwd.pin_raw.as_ref().expect("pin ran");
                let (d_mu_hat, d_lv_rep) = reparameterize_backward(log_var, eps, &d_c_p);
                // mu_hat = mu + a_tt: the shift passes its gradient to both.
                d_a += &d_mu_hat;
                let (d_mu_kl, d_lv_kl) = kl_divergence_backward(mu, log_var, grads.kl_scale);
                let d_mu = d_mu_hat + d_mu_kl;
                let d_lv = d_lv_rep + d_lv_kl;
                let d_raw = split_gaussian_backward(&d_mu, &d_lv, pin_raw);
                d_df += &pin.backward(&d_raw)?;
            }

            if let Some(d_c_s) = d_c_s {
                let sen = self.sen.as_mut().expect("variant has semantic branch");
                let c_pr = fwd.c_pr.as_ref().expect("sen ran");
                let (d_c_pr, d_a_act) = activate_semantic_backward(c_pr, a_tt, &d_c_s);
                d_a += &d_a_act;
                let d_c_pr_flat = d_c_pr
                    .into_shape_with_order(k * d)
                    .expect("prototype gradient is standard layout");
                d_df += &sen.backward(&d_c_pr_flat)?;
            }

            let d_a_raw = self.aan_sig.backward(&d_a);
            d_df += &self
                .aan
                .as_mut()
                .expect("variant has attributes")
                .backward(&d_a_raw)?;
            d_df
        };

        let d_y_p_enc = self.encoder.backward(&d_df)?;
        if grads.d_y_p.dim() != d_y_p_enc.dim() {
            return Err(Error::invalid(format!(
                "coarse-output gradient shape {:?} does not match {:?}",
                grads.d_y_p.dim(),
                d_y_p_enc.dim()
            )));
        }
        self.presr.backward(&(&d_y_p_enc + &grads.d_y_p))
    }
}

impl<S: Scalar> HasParams<S> for Facn<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        let mut v = self.presr.params();
        v.extend(self.encoder.params());
        if let Some(h) = &self.sen {
            v.extend(h.params());
        }
        if let Some(h) = &self.aan {
            v.extend(h.params());
        }
        if let Some(h) = &self.pin {
            v.extend(h.params());
        }
        if let Some(r) = &self.routing {
            v.extend(r.params());
        }
        v.extend(self.decoder.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        let mut v = self.presr.params_mut();
        v.extend(self.encoder.params_mut());
        if let Some(h) = &mut self.sen {
            v.extend(h.params_mut());
        }
        if let Some(h) = &mut self.aan {
            v.extend(h.params_mut());
        }
        if let Some(h) = &mut self.pin {
            v.extend(h.params_mut());
        }
        if let Some(r) = &mut self.routing {
            v.extend(r.params_mut());
        }
        v.extend(self.decoder.params_mut());
        v
    }
}
