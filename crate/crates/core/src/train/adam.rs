use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::scalar::Scalar;

/// Adam hyperparameters. `beta1 = 0.5` (not the textbook 0.9) keeps the
/// momentum short, which is the conventional choice for GAN training; decay
/// is decoupled from the gradient (AdamW style) and applied after the
/// moment update.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.5, beta2: 0.999, epsilon: 1e-8, weight_decay: 1e-4 }
    }
}

/// Adam optimizer with first/second moments keyed by parameter name, so the
/// same state applies regardless of parameter iteration order and can be
/// checkpointed as named blobs.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    cfg: AdamConfig,
    t: u64,
    m: BTreeMap<String, ArrayD<S>>,
    v: BTreeMap<String, ArrayD<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// One update over all parameters with the given learning rate, using
    /// the gradients currently accumulated on them.
    pub fn step(&mut self, lr: f64, params: &mut [&mut Parameter<S>]) {
        self.t += 1;
        let b1 = S::cast(self.cfg.beta1);
        let b2 = S::cast(self.cfg.beta2);
        let one = S::one();
        let eps = S::cast(self.cfg.epsilon);
        let lr_s = S::cast(lr);
        let bc1 = S::cast(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = S::cast(1.0 - self.cfg.beta2.powi(self.t as i32));
        let decay = S::cast(lr * self.cfg.weight_decay);

        for p in params.iter_mut() {
            let m = self
                .m
                .entry(p.name.clone())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            let v = self
                .v
                .entry(p.name.clone())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            azip_update(p, m, v, b1, b2, one, eps, lr_s, bc1, bc2, decay);
        }
    }

    /// Moments as named blobs (`m.<param>`, `v.<param>`) plus the step
    /// counter, for checkpointing.
    pub fn export_state(&self) -> (u64, BTreeMap<String, ArrayD<S>>) {
        let mut blobs = BTreeMap::new();
        for (name, m) in &self.m {
            blobs.insert(format!("m.{name}"), m.clone());
        }
        for (name, v) in &self.v {
            blobs.insert(format!("v.{name}"), v.clone());
        }
        (self.t, blobs)
    }

    /// Restore state produced by [`Adam::export_state`].
    pub fn import_state(&mut self, t: u64, blobs: BTreeMap<String, ArrayD<S>>) -> Result<()> {
        self.t = t;
        self.m.clear();
        self.v.clear();
        for (key, value) in blobs {
            if let Some(name) = key.strip_prefix("m.") {
                self.m.insert(name.to_string(), value);
            } else if let Some(name) = key.strip_prefix("v.") {
                self.v.insert(name.to_string(), value);
            } else {
                return Err(Error::Checkpoint(format!(
                    "unrecognized optimizer blob '{key}'"
                )));
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update<S: Scalar>(
    p: &mut Parameter<S>,
    m: &mut ArrayD<S>,
    v: &mut ArrayD<S>,
    b1: S,
    b2: S,
    one: S,
    eps: S,
    lr: S,
    bc1: S,
    bc2: S,
    decay: S,
) {
    for ((pv, g), (mv, vv)) in p
        .value
        .iter_mut()
        .zip(p.grad.iter())
        .zip(m.iter_mut().zip(v.iter_mut()))
    {
        *mv = b1 * *mv + (one - b1) * *g;
        *vv = b2 * *vv + (one - b2) * *g * *g;
        let m_hat = *mv / bc1;
        let v_hat = *vv / bc2;
        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        *pv -= decay * *pv;
    }
}

/// Stepwise learning-rate decay: halve the base rate every 20 epochs.
pub fn lr_schedule(base: f64, epoch: usize) -> f64 {
    base * 0.5_f64.powi((epoch / 20) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(name: &str, value: f64) -> Parameter<f64> {
        let mut p = Parameter::zeros(name.to_string(), &[1]);
        p.value[[0]] = value;
        p
    }

    #[test]
    fn first_step_moves_by_roughly_the_learning_rate() {
        // With m_hat = g and v_hat = g^2 after bias correction, the first
        // update is lr * g / (|g| + eps) ~ lr * sign(g).
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg);
        let mut p = param("p", 1.0);
        p.grad[[0]] = 2.0;
        opt.step(0.1, &mut [&mut p]);
        assert!((p.value[[0]] - 0.9).abs() < 1e-8);

        let mut n = param("n", 1.0);
        n.grad[[0]] = -0.001;
        let mut opt = Adam::new(cfg);
        opt.step(0.1, &mut [&mut n]);
        assert!((n.value[[0]] - 1.1).abs() < 1e-5);
    }

    #[test]
    fn decay_is_decoupled_from_the_gradient() {
        // Zero gradient leaves the moments at zero, so the only movement is
        // the decay term p -= lr * wd * p.
        let mut opt = Adam::new(AdamConfig::default());
        let mut p = param("p", 2.0);
        opt.step(0.5, &mut [&mut p]);
        let expect = 2.0 * (1.0 - 0.5 * 1e-4);
        assert!((p.value[[0]] - expect).abs() < 1e-12);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = AdamConfig { weight_decay: 0.0, ..AdamConfig::default() };
        let mut opt = Adam::new(cfg);
        let mut p = param("p", 3.0);
        for _ in 0..400 {
            p.grad[[0]] = 2.0 * p.value[[0]];
            opt.step(0.05, &mut [&mut p]);
            p.zero_grad();
        }
        assert!(p.value[[0]].abs() < 0.05, "ended at {}", p.value[[0]]);
    }

    #[test]
    fn state_round_trip_resumes_identically() {
        let cfg = AdamConfig::default();
        let mut a = Adam::new(cfg);
        let mut b = Adam::new(cfg);
        let mut pa = param("p", 1.0);
        let mut pb = param("p", 1.0);
        for i in 0..5 {
            pa.grad[[0]] = 0.3 * (i as f64 + 1.0);
            pb.grad[[0]] = pa.grad[[0]];
            a.step(0.01, &mut [&mut pa]);
            b.step(0.01, &mut [&mut pb]);
        }
        // Snapshot a, push it through a fresh optimizer, continue both.
        let (t, blobs) = a.export_state();
        let mut c = Adam::new(cfg);
        c.import_state(t, blobs).unwrap();
        let mut pc = pa.clone();
        for i in 0..5 {
            pc.grad[[0]] = -0.2 * (i as f64 + 1.0);
            pb.grad[[0]] = pc.grad[[0]];
            c.step(0.01, &mut [&mut pc]);
            b.step(0.01, &mut [&mut pb]);
        }
        assert_eq!(pc.value[[0]].to_bits(), pb.value[[0]].to_bits());
    }

    #[test]
    fn import_rejects_unknown_blob() {
        let mut opt = Adam::<f64>::new(AdamConfig::default());
        let mut blobs = BTreeMap::new();
        blobs.insert("q.p".to_string(), ArrayD::zeros(ndarray::IxDyn(&[1])));
        assert!(opt.import_state(1, blobs).is_err());
    }

    #[test]
    fn schedule_halves_every_twenty_epochs() {
        assert_eq!(lr_schedule(3e-4, 0), 3e-4);
        assert_eq!(lr_schedule(3e-4, 19), 3e-4);
        assert_eq!(lr_schedule(3e-4, 20), 1.5e-4);
        assert_eq!(lr_schedule(3e-4, 45), 7.5e-5);
        assert_eq!(lr_schedule(3e-4, 60), 3.75e-5);
    }
}
