//! Scoped finite-difference verification of every backward pass, always in
//! 64-bit arithmetic. Each scope builds small instances with deterministic
//! random inputs, compares analytic parameter gradients against central
//! differences, and reports the worst coordinate. The composite scopes
//! (`cgb`, `decoder`, `full-loss`) differentiate the complete training
//! objective and restrict the probed parameters, so the chain rule through
//! every intermediate stage is exercised end to end.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gan::{
    concat_condition, disc_loss, discriminator_step_grads, generator_adversarial_terms,
    Discriminator, GAMMA_ADV, GAMMA_PERC,
};
use crate::image::Image;
use crate::model::{
    reconstruction_grads, reconstruction_loss, Decoder, Encoder, Facn, ModelConfig, ModelVariant,
    PreSr, LAMBDA_ATTR,
};
use crate::nn::{
    check_gradients, Conv2d, GradCheckConfig, GradCheckReport, HasParams, Linear, ResidualBlock,
    UpsampleConv,
};

/// Pass threshold on the max relative error, matching the training contract.
pub const TOLERANCE: f64 = 1e-4;

/// Finite-difference step. LeakyReLU is piecewise linear, so a perturbation
/// that pushes a downstream pre-activation across zero adds a slope-mismatch
/// error that does not shrink with the step size — but the chance of a
/// crossing does. 1e-7 makes crossings negligible across tens of thousands
/// of activations while keeping 64-bit roundoff (~1e-15 / 2e-7 ≈ 5e-9) far
/// below the tolerance.
const FD_EPSILON: f64 = 1e-6;

fn fd_config(seed: u64) -> GradCheckConfig {
    GradCheckConfig {
        epsilon: FD_EPSILON,
        seed,
        ..GradCheckConfig::default()
    }
}

/// What to verify. `FullLoss` covers the complete reconstruction objective,
/// the generator's adversarial objective against a frozen discriminator, and
/// the discriminator's own loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Layers,
    Encoder,
    Cgb,
    Decoder,
    Discriminator,
    FullLoss,
}

impl Scope {
    pub const ALL: [Scope; 6] = [
        Scope::Layers,
        Scope::Encoder,
        Scope::Cgb,
        Scope::Decoder,
        Scope::Discriminator,
        Scope::FullLoss,
    ];
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scope::Layers => "layers",
            Scope::Encoder => "encoder",
            Scope::Cgb => "cgb",
            Scope::Decoder => "decoder",
            Scope::Discriminator => "discriminator",
            Scope::FullLoss => "full-loss",
        };
        f.write_str(s)
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "layers" => Ok(Scope::Layers),
            "encoder" => Ok(Scope::Encoder),
            "cgb" => Ok(Scope::Cgb),
            "decoder" => Ok(Scope::Decoder),
            "discriminator" => Ok(Scope::Discriminator),
            "full-loss" => Ok(Scope::FullLoss),
            other => Err(Error::invalid(format!(
                "unknown gradient-check scope '{other}' (expected layers, encoder, cgb, \
                 decoder, discriminator, or full-loss)"
            ))),
        }
    }
}

/// One named check and its finite-difference report.
#[derive(Debug, Clone)]
pub struct ScopeCheck {
    pub name: String,
    pub report: GradCheckReport,
}

impl ScopeCheck {
    pub fn passed(&self) -> bool {
        self.report.passes(TOLERANCE)
    }
}

fn random_array3(shape: (usize, usize, usize), lo: f64, hi: f64, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
}

fn random_array1(n: usize, lo: f64, hi: f64, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_simple_fn(n, || rng.random_range(lo..hi))
}

/// The tiny reference configuration every composite scope shares.
fn check_config() -> ModelConfig {
    ModelConfig {
        hr_size: 16,
        scale: 8,
        k: 6,
        d: 3,
        variant: ModelVariant::Full,
        supervised_attrs: 3,
    }
}

/// Fixed inputs for the composite scopes: LR input, HR target, attribute
/// labels, and reparameterization noise (fixed, so the objective is
/// deterministic under perturbation).
struct LossInputs {
    x_lr: Image<f64>,
    y: Array3<f64>,
    attrs: Array1<f64>,
    eps: Array1<f64>,
}

fn loss_inputs(cfg: &ModelConfig, seed: u64) -> LossInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LossInputs {
        x_lr: Image::synthetic_rgb(cfg.lr_size(), cfg.lr_size(), seed ^ 0x11),
        y: Image::synthetic_rgb(cfg.hr_size, cfg.hr_size, seed ^ 0x22).to_chw(),
        attrs: Array1::from_shape_simple_fn(cfg.k, || f64::from(rng.random_bool(0.5))),
        eps: random_array1(cfg.k, -1.5, 1.5, seed ^ 0x33),
    }
}

/// Check the reconstruction objective's gradient, restricted to parameters
/// whose names start with one of `prefixes` (empty = all).
fn check_reconstruction(
    label: &str,
    variant: ModelVariant,
    prefixes: &'static [&'static str],
    seed: u64,
) -> Result<ScopeCheck> {
    let mut cfg = check_config();
    cfg.variant = variant;
    let inputs = loss_inputs(&cfg, seed);
    let supervised = cfg.supervised_attrs;
    let lambda = LAMBDA_ATTR;
    let mut model = Facn::<f64>::new(&cfg, seed)?;

    let eval = |m: &mut Facn<f64>| -> Result<f64> {
        let fwd = m.forward(&inputs.x_lr, Some(&inputs.eps))?;
        Ok(reconstruction_loss(&fwd, &inputs.y, Some(&inputs.attrs), supervised, lambda)?.total)
    };
    let report = check_gradients(
        &mut model,
        |m| {
            let fwd = m.forward(&inputs.x_lr, Some(&inputs.eps))?;
            let loss =
                reconstruction_loss(&fwd, &inputs.y, Some(&inputs.attrs), supervised, lambda)?;
            let grads = reconstruction_grads(
                &fwd,
                &inputs.y,
                Some(&inputs.attrs),
                supervised,
                lambda,
                1.0,
                None,
            )?;
            m.zero_grads();
            m.backward(&fwd, &grads)?;
            Ok(loss.total)
        },
        eval,
        |m| {
            m.params_mut()
                .into_iter()
                .filter(|p| prefixes.is_empty() || prefixes.iter().any(|x| p.name.starts_with(x)))
                .collect()
        },
        &fd_config(seed),
    )?;
    Ok(ScopeCheck {
        name: label.to_string(),
        report,
    })
}

/// Project an output tensor to a scalar with fixed random weights; its
/// gradient is exactly those weights, which keeps layer checks simple while
/// exercising every output coordinate.
fn projection_check<M>(
    name: &str,
    model: &mut M,
    fwd: impl Fn(&mut M) -> Result<Vec<f64>>,
    bwd: impl Fn(&mut M, &[f64]) -> Result<()>,
    params: impl Fn(&mut M) -> Vec<&mut crate::nn::Parameter<f64>>,
    out_len: usize,
    seed: u64,
) -> Result<ScopeCheck> {
    let weights = random_array1(out_len, -1.0, 1.0, seed ^ 0x77).to_vec();
    let project = |out: &[f64]| out.iter().zip(&weights).map(|(o, w)| o * w).sum::<f64>();

    let report = check_gradients(
        model,
        |m| {
            for p in params(m) {
                p.zero_grad();
            }
            let out = fwd(m)?;
            bwd(m, &weights)?;
            Ok(project(&out))
        },
        |m| Ok(project(&fwd(m)?)),
        |m| params(m),
        &fd_config(seed),
    )?;
    Ok(ScopeCheck {
        name: name.to_string(),
        report,
    })
}

fn layer_checks(seed: u64) -> Result<Vec<ScopeCheck>> {
    let mut out = Vec::new();

    let x = random_array3((3, 8, 8), -1.0, 1.0, seed ^ 1);
    let mut conv = Conv2d::<f64>::new("gc.conv_s1", 3, 5, 1, seed);
    out.push(projection_check(
        "conv-stride1",
        &mut conv,
        |m| Ok(m.forward(&x)?.into_iter().collect()),
        |m, w| {
            let dy = Array3::from_shape_vec((5, 8, 8), w.to_vec()).expect("projection shape");
            m.backward(&dy).map(|_| ())
        },
        |m| m.params_mut(),
        5 * 8 * 8,
        seed,
    )?);

    let x = random_array3((4, 8, 8), -1.0, 1.0, seed ^ 2);
    let mut conv = Conv2d::<f64>::new("gc.conv_s2", 4, 6, 2, seed);
    out.push(projection_check(
        "conv-stride2",
        &mut conv,
        |m| Ok(m.forward(&x)?.into_iter().collect()),
        |m, w| {
            let dy = Array3::from_shape_vec((6, 4, 4), w.to_vec()).expect("projection shape");
            m.backward(&dy).map(|_| ())
        },
        |m| m.params_mut(),
        6 * 4 * 4,
        seed,
    )?);

    let x = random_array1(12, -1.0, 1.0, seed ^ 3);
    let mut fc = Linear::<f64>::new("gc.fc", 12, 7, seed);
    out.push(projection_check(
        "linear",
        &mut fc,
        |m| Ok(m.forward(&x)?.to_vec()),
        |m, w| {
            let dy = Array1::from_vec(w.to_vec());
            m.backward(&dy).map(|_| ())
        },
        |m| m.params_mut(),
        7,
        seed,
    )?);

    let x = random_array3((4, 6, 6), -1.0, 1.0, seed ^ 4);
    let mut res = ResidualBlock::<f64>::new("gc.res", 4, seed);
    out.push(projection_check(
        "residual-block",
        &mut res,
        |m| Ok(m.forward(&x)?.into_iter().collect()),
        |m, w| {
            let dy = Array3::from_shape_vec((4, 6, 6), w.to_vec()).expect("projection shape");
            m.backward(&dy).map(|_| ())
        },
        |m| m.params_mut(),
        4 * 6 * 6,
        seed,
    )?);

    let x = random_array3((3, 5, 5), -1.0, 1.0, seed ^ 5);
    let mut up = UpsampleConv::<f64>::new("gc.up", 3, 4, seed);
    out.push(projection_check(
        "upsample-conv",
        &mut up,
        |m| Ok(m.forward(&x)?.into_iter().collect()),
        |m, w| {
            let dy = Array3::from_shape_vec((4, 10, 10), w.to_vec()).expect("projection shape");
            m.backward(&dy).map(|_| ())
        },
        |m| m.params_mut(),
        4 * 10 * 10,
        seed,
    )?);

    let x = Image::<f64>::synthetic_rgb(2, 2, seed ^ 6);
    let mut presr = PreSr::<f64>::new("gc.presr", 2, 8, seed);
    out.push(projection_check(
        "pre-sr",
        &mut presr,
        |m| Ok(m.forward(&x)?.into_iter().collect()),
        |m, w| {
            let dy = Array3::from_shape_vec((3, 16, 16), w.to_vec()).expect("projection shape");
            m.backward(&dy).map(|_| ())
        },
        |m| m.params_mut(),
        3 * 16 * 16,
        seed,
    )?);

    Ok(out)
}

fn encoder_check(seed: u64) -> Result<Vec<ScopeCheck>> {
    let x = random_array3((3, 16, 16), 0.0, 1.0, seed ^ 7);
    let mut enc = Encoder::<f64>::new("gc.enc", 16, seed);
    Ok(vec![projection_check(
        "encoder",
        &mut enc,
        |m| Ok(m.forward(&x)?.into_iter().collect()),
        |m, w| {
            let dy = Array3::from_shape_vec((64, 2, 2), w.to_vec()).expect("projection shape");
            m.backward(&dy).map(|_| ())
        },
        |m| m.params_mut(),
        64 * 2 * 2,
        seed,
    )?])
}

fn cgb_checks(seed: u64) -> Result<Vec<ScopeCheck>> {
    Ok(vec![
        // The three heads' gradients flow through attribute masking, the
        // mean shift, reparameterization, the KL term, and FAC assembly.
        check_reconstruction(
            "cgb-heads",
            ModelVariant::Full,
            &["gen.sen", "gen.aan", "gen.pin"],
            seed,
        )?,
        // Dynamic routing's transformation matrix, through all iterations.
        check_reconstruction("cgb-routing", ModelVariant::V3, &["gen.route"], seed)?,
    ])
}

fn decoder_checks(seed: u64) -> Result<Vec<ScopeCheck>> {
    let cfg = check_config();
    let caps_len = cfg.caps_len();
    let x = random_array1(caps_len, -1.0, 1.0, seed ^ 8);
    let mut dec = Decoder::<f64>::new("gc.dec", caps_len, 16, seed);
    Ok(vec![
        projection_check(
            "decoder-standalone",
            &mut dec,
            |m| Ok(m.forward(&x)?.into_iter().collect()),
            |m, w| {
                let dy = Array3::from_shape_vec((3, 16, 16), w.to_vec()).expect("projection shape");
                m.backward(&dy).map(|_| ())
            },
            |m| m.params_mut(),
            3 * 16 * 16,
            seed,
        )?,
        check_reconstruction("decoder-in-loss", ModelVariant::Full, &["gen.dec"], seed)?,
    ])
}

fn discriminator_checks(seed: u64) -> Result<Vec<ScopeCheck>> {
    let x = random_array3((6, 16, 16), 0.0, 1.0, seed ^ 9);
    let mut disc = Discriminator::<f64>::new(16, seed);
    // Perceptual features sit after two stride-2 stages: (64, hr/4, hr/4).
    let feat_shape = (64, 4, 4);
    let feat_len = 64 * 4 * 4;
    Ok(vec![projection_check(
        "discriminator",
        &mut disc,
        |m| {
            let o = m.forward(&x)?;
            let mut v = vec![o.logit];
            v.extend(o.features.iter().copied());
            Ok(v)
        },
        |m, w| {
            let df =
                Array3::from_shape_vec(feat_shape, w[1..].to_vec()).expect("projection shape");
            m.backward(w[0], Some(&df)).map(|_| ())
        },
        |m| m.params_mut(),
        1 + feat_len,
        seed,
    )?])
}

fn full_loss_checks(seed: u64) -> Result<Vec<ScopeCheck>> {
    let mut out = vec![check_reconstruction(
        "reconstruction-objective",
        ModelVariant::Full,
        &[],
        seed,
    )?];

    // Generator's complete objective: reconstruction plus the weighted
    // adversarial and perceptual terms against a frozen discriminator.
    let cfg = check_config();
    let inputs = loss_inputs(&cfg, seed ^ 0xaa);
    let supervised = cfg.supervised_attrs;
    let cond = random_array3((3, cfg.hr_size, cfg.hr_size), 0.0, 1.0, seed ^ 0xcc);

    struct GenHost {
        model: Facn<f64>,
        disc: Discriminator<f64>,
    }
    let mut host = GenHost {
        model: Facn::<f64>::new(&cfg, seed)?,
        disc: Discriminator::<f64>::new(cfg.hr_size, seed ^ 0xbb),
    };
    let total_of = |h: &mut GenHost, backward: bool| -> Result<f64> {
        let fwd = h.model.forward(&inputs.x_lr, Some(&inputs.eps))?;
        let recon =
            reconstruction_loss(&fwd, &inputs.y, Some(&inputs.attrs), supervised, LAMBDA_ATTR)?;
        let terms = generator_adversarial_terms(
            &mut h.disc,
            &fwd.y_hat,
            &inputs.y,
            &cond,
            GAMMA_ADV,
            GAMMA_PERC,
        )?;
        if backward {
            let grads = reconstruction_grads(
                &fwd,
                &inputs.y,
                Some(&inputs.attrs),
                supervised,
                LAMBDA_ATTR,
                1.0,
                Some(&terms.d_y_hat),
            )?;
            h.model.zero_grads();
            h.model.backward(&fwd, &grads)?;
        }
        Ok(recon.total + GAMMA_ADV * terms.adv_loss + GAMMA_PERC * terms.perc_loss)
    };
    let report = check_gradients(
        &mut host,
        |h| total_of(h, true),
        |h| total_of(h, false),
        |h| h.model.params_mut(),
        &fd_config(seed),
    )?;
    out.push(ScopeCheck {
        name: "generator-objective".to_string(),
        report,
    });

    // Discriminator's objective on a fixed real/generated pair.
    let y = random_array3((3, 16, 16), 0.0, 1.0, seed ^ 0xdd);
    let y_hat = random_array3((3, 16, 16), 0.0, 1.0, seed ^ 0xee);
    let cond = random_array3((3, 16, 16), 0.0, 1.0, seed ^ 0xff);
    let mut disc = Discriminator::<f64>::new(16, seed ^ 0x1234);
    let report = check_gradients(
        &mut disc,
        |m| {
            m.zero_grads();
            Ok(discriminator_step_grads(m, &y, &y_hat, &cond, 1.0)?.loss)
        },
        |m| {
            let p_real = m.forward(&concat_condition(&y, &cond)?)?.prob;
            let p_fake = m.forward(&concat_condition(&y_hat, &cond)?)?.prob;
            Ok(disc_loss(p_real, p_fake))
        },
        |m| m.params_mut(),
        &fd_config(seed),
    )?;
    out.push(ScopeCheck {
        name: "discriminator-objective".to_string(),
        report,
    });
    Ok(out)
}

/// Run one scope's checks with deterministic inputs derived from `seed`.
pub fn run_scope(scope: Scope, seed: u64) -> Result<Vec<ScopeCheck>> {
    match scope {
        Scope::Layers => layer_checks(seed),
        Scope::Encoder => encoder_check(seed),
        Scope::Cgb => cgb_checks(seed),
        Scope::Decoder => decoder_checks(seed),
        Scope::Discriminator => discriminator_checks(seed),
        Scope::FullLoss => full_loss_checks(seed),
    }
}

/// Run every scope, returning all named checks in order.
pub fn run_all(seed: u64) -> Result<Vec<ScopeCheck>> {
    let mut out = Vec::new();
    for scope in Scope::ALL {
        out.extend(run_scope(scope, seed)?);
    }
    Ok(out)
}
