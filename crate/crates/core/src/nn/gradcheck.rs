use rand::prelude::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::param::Parameter;
use crate::scalar::Scalar;

/// Settings for a finite-difference run. Central differences with the default
/// step only make sense in 64-bit arithmetic.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub epsilon: f64,
    /// Cap on the number of coordinates probed; large tensors are sampled.
    pub max_coords: usize,
    /// Seed for coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { epsilon: 1e-4, max_coords: 200, seed: 0 }
    }
}

/// Worst offending coordinate of a check.
#[derive(Debug, Clone)]
pub struct CoordError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of a finite-difference comparison over (a sample of) coordinates.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub worst: Option<CoordError>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Relative error with a floored denominator: coordinates below the floor
/// are held to an absolute tolerance instead of a relative one.
///
/// The floor is set by what central differences can resolve in 64-bit. A
/// loss evaluated through ~10⁶ flops carries roundoff of a few ulps
/// (δL ≈ 1e-14), so the numeric derivative has absolute noise δL/2ε — about
/// 1e-8..1e-7 at the step sizes small enough to keep LeakyReLU kink
/// crossings negligible. Demanding 1e-4 *relative* agreement on a
/// coordinate whose true magnitude sits below that noise is impossible for
/// a correct gradient; with the 1e-3 floor such coordinates must instead
/// agree to 1e-7 absolute at the usual 1e-4 tolerance, which is ~10x above
/// the noise and ~1000x below the gradient scales that drive learning.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-3)
}

/// Compares analytic parameter gradients against central finite differences.
///
/// `run_backward` must zero the gradients, run forward and backward, and
/// return the loss; `eval_loss` must run the forward pass only. `params_of`
/// exposes the parameters the check perturbs. Non-finite losses abort with an
/// error. When the parameter set holds more than `max_coords` scalars, a
/// seeded sample of at least that many coordinates is probed instead of all.
pub fn check_gradients<M, S: Scalar>(
    model: &mut M,
    mut run_backward: impl FnMut(&mut M) -> Result<S>,
    mut eval_loss: impl FnMut(&mut M) -> Result<S>,
    mut params_of: impl FnMut(&mut M) -> Vec<&mut Parameter<S>>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let loss0 = run_backward(model)?.as_f64();
    if !loss0.is_finite() {
        return Err(Error::NonFinite(format!("loss is {loss0} before gradient check")));
    }

    // Snapshot the analytic gradients before perturbation runs overwrite
    // layer caches.
    let analytic: Vec<(String, Vec<f64>)> = params_of(model)
        .iter()
        .map(|p| (p.name.clone(), p.grad.iter().map(|g| g.as_f64()).collect()))
        .collect();

    let coords = pick_coords(&analytic, cfg);

    let mut report = GradCheckReport { max_rel_err: 0.0, coords_checked: 0, worst: None };
    for (pi, idx) in coords {
        let set = |model: &mut M, params_of: &mut dyn FnMut(&mut M) -> Vec<&mut Parameter<S>>,
                   v: f64| {
            let mut ps = params_of(model);
            ps[pi].value.as_slice_mut().expect("parameters are standard layout")[idx] =
                S::cast(v);
        };
        let orig = {
            let ps = params_of(model);
            ps[pi].value.as_slice().expect("parameters are standard layout")[idx].as_f64()
        };

        set(model, &mut params_of, orig + cfg.epsilon);
        let lp = eval_loss(model)?.as_f64();
        set(model, &mut params_of, orig - cfg.epsilon);
        let lm = eval_loss(model)?.as_f64();
        set(model, &mut params_of, orig);
        if !lp.is_finite() || !lm.is_finite() {
            return Err(Error::NonFinite(format!(
                "perturbed loss is not finite at {}[{idx}]",
                analytic[pi].0
            )));
        }

        let numeric = (lp - lm) / (2.0 * cfg.epsilon);
        let a = analytic[pi].1[idx];
        let rel = relative_error(a, numeric);
        report.coords_checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some(CoordError {
                param: analytic[pi].0.clone(),
                index: idx,
                analytic: a,
                numeric,
                rel_err: rel,
            });
        }
    }
    Ok(report)
}

/// All coordinates when the total is small; otherwise a seeded sample of
/// `max_coords` distinct coordinates spread over all parameters.
fn pick_coords(analytic: &[(String, Vec<f64>)], cfg: &GradCheckConfig) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(pi, (_, g))| (0..g.len()).map(move |i| (pi, i)))
        .collect();
    if all.len() <= cfg.max_coords {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked: Vec<(usize, usize)> =
        all.choose_multiple(&mut rng, cfg.max_coords).copied().collect();
    picked.sort_unstable();
    picked
}
