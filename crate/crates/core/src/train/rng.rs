//! Counter-based randomness: every random draw in training is keyed by
//! `(master seed, epoch, step, sample, purpose)` instead of consuming a
//! shared stream. Resuming from a checkpoint therefore needs no saved RNG
//! state — replaying the same coordinates reproduces the same draws.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Purpose tags keeping unrelated draws at the same coordinates independent.
#[derive(Debug, Clone, Copy)]
pub enum Draw {
    /// Degradation noise for a training sample.
    Degrade,
    /// Reparameterization noise for the probabilistic capsules.
    Reparam,
    /// Fixed evaluation-time degradation of a sample.
    EvalDegrade,
}

impl Draw {
    fn salt(self) -> u64 {
        match self {
            Draw::Degrade => 0,
            Draw::Reparam => 1,
            Draw::EvalDegrade => 2,
        }
    }
}

/// SplitMix64 finalizer: a cheap avalanche so that related coordinates give
/// unrelated seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Fold a coordinate list into one 64-bit seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x243f6a8885a308d3; // pi, for lack of a better constant
    for &p in parts {
        acc = splitmix64(acc ^ splitmix64(p));
    }
    acc
}

/// Seed for one sample's draw of the given purpose.
pub fn sample_seed(master: u64, epoch: u64, step: u64, sample: u64, purpose: Draw) -> u64 {
    mix_seed(&[master, epoch, step, sample, purpose.salt()])
}

/// Epoch-deterministic permutation of `0..n`.
pub fn shuffle_indices(n: usize, master: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[master, epoch, u64::MAX]));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// `k` standard-normal draws for the reparameterization trick.
pub fn normal_noise<S: Scalar>(k: usize, seed: u64) -> Array1<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_simple_fn(k, || {
        let v: f64 = StandardNormal.sample(&mut rng);
        S::cast(v)
    })
}
