use ndarray::{Array3, Ix3};

use crate::error::Result;
use crate::nn::activation::LeakyRelu;
use crate::nn::conv::Conv2d;
use crate::nn::param::{HasParams, Parameter};
use crate::scalar::Scalar;

/// Residual block `x + conv(leakyrelu(conv(x)))`, both convs 3x3 stride 1
/// with a fixed channel count.
#[derive(Debug, Clone)]
pub struct ResidualBlock<S> {
    conv1: Conv2d<S>,
    act: LeakyRelu<S, Ix3>,
    conv2: Conv2d<S>,
}

impl<S: Scalar> ResidualBlock<S> {
    pub fn new(name: &str, channels: usize, master_seed: u64) -> Self {
        ResidualBlock {
            conv1: Conv2d::new(&format!("{name}.conv1"), channels, channels, 1, master_seed),
            act: LeakyRelu::new(),
            conv2: Conv2d::new(&format!("{name}.conv2"), channels, channels, 1, master_seed),
        }
    }

    pub fn forward(&mut self, x: &Array3<S>) -> Result<Array3<S>> {
        let h = self.conv1.forward(x)?;
        let h = self.act.forward(&h);
        let f = self.conv2.forward(&h)?;
        Ok(x + &f)
    }

    pub fn backward(&mut self, dy: &Array3<S>) -> Result<Array3<S>> {
        let dh = self.conv2.backward(dy)?;
        let dh = self.act.backward(&dh);
        let dresid = self.conv1.backward(&dh)?;
        Ok(dy + &dresid)
    }

    /// Zeroes the inner conv weights, turning the block into the identity.
    #[cfg(test)]
    pub fn zero_weights(&mut self) {
        self.conv1.w.value.fill(S::zero());
        self.conv1.b.value.fill(S::zero());
        self.conv2.w.value.fill(S::zero());
        self.conv2.b.value.fill(S::zero());
    }
}

impl<S: Scalar> HasParams<S> for ResidualBlock<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        let mut v = self.conv1.params();
        v.extend(self.conv2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        v
    }
}
