use ndarray::Array3;

use crate::error::Result;
use crate::nn::conv::Conv2d;
use crate::nn::param::{HasParams, Parameter};
use crate::scalar::Scalar;

/// Nearest-neighbor 2x spatial upsampling: each pixel becomes a 2x2 block.
pub fn nearest_upsample2x<S: Scalar>(x: &Array3<S>) -> Array3<S> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, 2 * h, 2 * w), |(ci, y, xx)| x[(ci, y / 2, xx / 2)])
}

/// Gradient of `nearest_upsample2x`: sums each 2x2 block.
pub fn nearest_upsample2x_backward<S: Scalar>(dy: &Array3<S>) -> Array3<S> {
    let (c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array3::zeros((c, h, w));
    for ci in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                dx[(ci, y / 2, x / 2)] += dy[(ci, y, x)];
            }
        }
    }
    dx
}

/// Up-sampling convolution: nearest 2x upsample followed by a 3x3 stride-1
/// conv. Doubles each spatial dimension exactly.
#[derive(Debug, Clone)]
pub struct UpsampleConv<S> {
    conv: Conv2d<S>,
}

impl<S: Scalar> UpsampleConv<S> {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, master_seed: u64) -> Self {
        UpsampleConv { conv: Conv2d::new(name, in_ch, out_ch, 1, master_seed) }
    }

    pub fn forward(&mut self, x: &Array3<S>) -> Result<Array3<S>> {
        self.conv.forward(&nearest_upsample2x(x))
    }

    pub fn backward(&mut self, dy: &Array3<S>) -> Result<Array3<S>> {
        let dup = self.conv.backward(dy)?;
        Ok(nearest_upsample2x_backward(&dup))
    }
}

impl<S: Scalar> HasParams<S> for UpsampleConv<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        self.conv.params_mut()
    }
}
