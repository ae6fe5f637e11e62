use ndarray::{Array3, Ix3};

use crate::error::{Error, Result};
use crate::image::{bicubic_resize, Image};
use crate::model::config::HIDDEN_CHANNELS;
use crate::nn::{Conv2d, HasParams, LeakyRelu, Parameter, ResidualBlock};
use crate::scalar::Scalar;

/// Coarse super-resolution stage: bicubic x8 upsample, a 3x3 conv to 64
/// channels, three residual blocks, and a 3x3 conv back to RGB. Produces the
/// coarse image `y_p` that both the `||y - y_p||` loss term and the encoder
/// consume.
///
/// The listed layers contain no upsampling of their own, so the stage starts
/// from plain interpolation and learns the refinement on top.
#[derive(Debug, Clone)]
pub struct PreSr<S> {
    conv_in: Conv2d<S>,
    act_in: LeakyRelu<S, Ix3>,
    blocks: Vec<ResidualBlock<S>>,
    conv_out: Conv2d<S>,
    lr_size: usize,
    scale: usize,
}

impl<S: Scalar> PreSr<S> {
    pub fn new(name: &str, lr_size: usize, scale: usize, master_seed: u64) -> Self {
        let blocks = (0..3)
            .map(|i| {
                ResidualBlock::new(&format!("{name}.res{i}"), HIDDEN_CHANNELS, master_seed)
            })
            .collect();
        PreSr {
            conv_in: Conv2d::new(&format!("{name}.conv_in"), 3, HIDDEN_CHANNELS, 1, master_seed),
            act_in: LeakyRelu::new(),
            blocks,
            conv_out: Conv2d::new(&format!("{name}.conv_out"), HIDDEN_CHANNELS, 3, 1, master_seed),
            lr_size,
            scale,
        }
    }

    /// LR image in, coarse HR tensor `(3, hr, hr)` out.
    pub fn forward(&mut self, lr: &Image<S>) -> Result<Array3<S>> {
        let (h, w, c) = lr.shape();
        if h != self.lr_size || w != self.lr_size || c != 3 {
            return Err(Error::invalid(format!(
                "pre-SR expects a {0}x{0}x3 input, got {h}x{w}x{c}",
                self.lr_size
            )));
        }
        let hr = self.lr_size * self.scale;
        let up = bicubic_resize(lr, hr, hr, false)?;
        let mut t = self.act_in.forward(&self.conv_in.forward(&up.to_chw())?);
        for block in &mut self.blocks {
            t = block.forward(&t)?;
        }
        self.conv_out.forward(&t)
    }

    /// Accumulates parameter gradients from the coarse-image gradient. The
    /// chain stops at the interpolated input (that is data, not parameters),
    /// so nothing is returned.
    pub fn backward(&mut self, d_yp: &Array3<S>) -> Result<()> {
        let mut d = self.conv_out.backward(d_yp)?;
        for block in self.blocks.iter_mut().rev() {
            d = block.backward(&d)?;
        }
        let d = self.act_in.backward(&d);
        let _ = self.conv_in.backward(&d)?;
        Ok(())
    }

    #[cfg(test)]
    pub fn zero_weights(&mut self) {
        for p in self.params_mut() {
            p.value.fill(S::zero());
        }
    }
}

impl<S: Scalar> HasParams<S> for PreSr<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        let mut v = self.conv_in.params();
        for b in &self.blocks {
            v.extend(b.params());
        }
        v.extend(self.conv_out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        let mut v = self.conv_in.params_mut();
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.conv_out.params_mut());
        v
    }
}
