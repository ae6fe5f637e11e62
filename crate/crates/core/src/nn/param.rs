use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::scalar::Scalar;

/// A named trainable tensor together with its gradient accumulator.
///
/// Gradients always share the value's shape and are accumulated (`+=`) by the
/// layer backward passes, so one batch can be processed sample by sample.
#[derive(Debug, Clone)]
pub struct Parameter<S> {
    pub name: String,
    pub value: ArrayD<S>,
    pub grad: ArrayD<S>,
}

impl<S: Scalar> Parameter<S> {
    pub fn new(name: impl Into<String>, value: ArrayD<S>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Parameter { name: name.into(), value, grad }
    }

    /// An all-zero parameter (biases).
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, ArrayD::zeros(IxDyn(shape)))
    }

    /// He-initialized parameter: zero-mean Gaussian with variance `2/fan_in`.
    /// The draw stream is derived from the master seed and the parameter name,
    /// so values do not depend on construction order.
    pub fn he(name: impl Into<String>, shape: &[usize], fan_in: usize, master_seed: u64) -> Self {
        let name = name.into();
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(master_seed, &name));
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("std is positive and finite");
        let value = ArrayD::from_shape_simple_fn(IxDyn(shape), || S::cast(normal.sample(&mut rng)));
        Self::new(name, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }

    pub fn all_finite(&self) -> bool {
        self.value.iter().all(|v| v.is_finite())
    }
}

/// A stable per-parameter seed: the first eight bytes of
/// `SHA-256(master_seed || name)`.
pub fn seed_for(master_seed: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Anything that exposes its trainable parameters, for the optimizer, the
/// checkpoint writer, and the gradient checker.
pub trait HasParams<S: Scalar> {
    fn params(&self) -> Vec<&Parameter<S>>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<S>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
