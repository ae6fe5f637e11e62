use ndarray::{s, Array1, Array3, Ix1, Ix3};

use crate::error::{Error, Result};
use crate::image::{bicubic_resize, Image};
use crate::nn::{Conv2d, HasParams, LeakyRelu, Linear, Parameter};
use crate::scalar::Scalar;

/// Channels inside the discriminator trunk.
const DISC_CHANNELS: usize = 64;
/// Width of the hidden fully connected layer.
const DISC_FC_WIDTH: usize = 256;
/// Stride pattern of the eight convolution stages; the four stride-2 stages
/// reduce the input to 1/16 of its side length.
const DISC_STRIDES: [usize; 8] = [1, 2, 1, 2, 1, 2, 1, 2];
/// Stage whose LeakyReLU output serves as the perceptual feature tap
/// (the fifth convolution, index 4).
const FEATURE_STAGE: usize = 4;

/// Bicubically upsample the LR input to HR size for conditioning. Plain
/// interpolation, no antialiasing (it is an upscale).
pub fn bicubic_condition<S: Scalar>(x_lr: &Image<S>, hr_size: usize) -> Result<Array3<S>> {
    Ok(bicubic_resize(x_lr, hr_size, hr_size, false)?.to_chw())
}

/// Stack a candidate image on top of the conditioning image along the
/// channel axis: channels `0..3` are the candidate, `3..6` the condition.
pub fn concat_condition<S: Scalar>(img: &Array3<S>, cond: &Array3<S>) -> Result<Array3<S>> {
    if img.dim() != cond.dim() {
        return Err(Error::invalid(format!(
            "candidate shape {:?} does not match condition {:?}",
            img.dim(),
            cond.dim()
        )));
    }
    let (c, h, w) = img.dim();
    let mut out = Array3::zeros((2 * c, h, w));
    out.slice_mut(s![..c, .., ..]).assign(img);
    out.slice_mut(s![c.., .., ..]).assign(cond);
    Ok(out)
}

/// One discriminator evaluation: the real/fake probability, its pre-sigmoid
/// logit, and the perceptual feature map from the fifth stage.
#[derive(Debug, Clone)]
pub struct DiscOutput<S> {
    pub prob: S,
    pub logit: S,
    pub features: Array3<S>,
}

/// Conditional discriminator: candidate and bicubic-upsampled LR stacked to
/// a 6-channel input, eight 3x3 convolutions alternating stride 1 and 2
/// (64 channels, LeakyReLU) down to 1/16 resolution, then two fully
/// connected layers to a single probability.
///
/// `backward` accumulates parameter gradients like every other layer here;
/// a generator-only step that needs just the input gradient should clear
/// them again before the next discriminator update.
#[derive(Debug)]
pub struct Discriminator<S> {
    convs: Vec<Conv2d<S>>,
    acts: Vec<LeakyRelu<S, Ix3>>,
    fc1: Linear<S>,
    fc1_act: LeakyRelu<S, Ix1>,
    fc2: Linear<S>,
    hr_size: usize,
}

impl<S: Scalar> Discriminator<S> {
    pub fn new(hr_size: usize, master_seed: u64) -> Self {
        assert!(
            hr_size % 16 == 0,
            "HR size {hr_size} must be divisible by 16 for the stride pattern"
        );
        let convs = DISC_STRIDES
            .iter()
            .enumerate()
            .map(|(i, &stride)| {
                let in_ch = if i == 0 { 6 } else { DISC_CHANNELS };
                Conv2d::new(&format!("disc.conv{i:02}"), in_ch, DISC_CHANNELS, stride, master_seed)
            })
            .collect();
        let final_side = hr_size / 16;
        let fc1 = Linear::new(
            "disc.fc1",
            DISC_CHANNELS * final_side * final_side,
            DISC_FC_WIDTH,
            master_seed,
        );
        let fc2 = Linear::new("disc.fc2", DISC_FC_WIDTH, 1, master_seed);
        Discriminator {
            convs,
            acts: (0..DISC_STRIDES.len()).map(|_| LeakyRelu::new()).collect(),
            fc1,
            fc1_act: LeakyRelu::new(),
            fc2,
            hr_size,
        }
    }

    pub fn hr_size(&self) -> usize {
        self.hr_size
    }

    /// Side length after each convolution stage.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut s = self.hr_size;
        DISC_STRIDES
            .iter()
            .map(|&stride| {
                s = (s - 1) / stride + 1;
                s
            })
            .collect()
    }

    pub fn forward(&mut self, input: &Array3<S>) -> Result<DiscOutput<S>> {
        if input.dim() != (6, self.hr_size, self.hr_size) {
            return Err(Error::invalid(format!(
                "discriminator input shape {:?}, expected (6, {}, {})",
                input.dim(),
                self.hr_size,
                self.hr_size
            )));
        }
        let mut t = input.clone();
        let mut features = None;
        for (i, (conv, act)) in self.convs.iter_mut().zip(&mut self.acts).enumerate() {
            t = act.forward(&conv.forward(&t)?);
            if i == FEATURE_STAGE {
                features = Some(t.clone());
            }
        }
        let flat = t
            .into_shape_with_order(self.fc1.in_features())
            .expect("trunk output is standard layout");
        let h = self.fc1_act.forward(&self.fc1.forward(&flat)?);
        let logit = self.fc2.forward(&h)?[0];
        let prob = S::one() / (S::one() + (-logit).exp());
        Ok(DiscOutput { prob, logit, features: features.expect("tap stage always runs") })
    }

    /// Backpropagate a gradient on the logit and, optionally, one injected
    /// at the perceptual feature tap. Returns the 6-channel input gradient.
    pub fn backward(&mut self, d_logit: S, d_features: Option<&Array3<S>>) -> Result<Array3<S>> {
        let d_h = self.fc2.backward(&Array1::from(vec![d_logit]))?;
        let d_flat = self.fc1.backward(&self.fc1_act.backward(&d_h))?;
        let side = self.hr_size / 16;
        let mut d = d_flat
            .into_shape_with_order((DISC_CHANNELS, side, side))
            .expect("flat gradient is standard layout");
        for i in (0..self.convs.len()).rev() {
            d = self.convs[i].backward(&self.acts[i].backward(&d))?;
            if i == FEATURE_STAGE + 1 {
                if let Some(df) = d_features {
                    if df.dim() != d.dim() {
                        return Err(Error::invalid(format!(
                            "feature gradient shape {:?} does not match tap {:?}",
                            df.dim(),
                            d.dim()
                        )));
                    }
                    d += df;
                }
            }
        }
        Ok(d)
    }

    #[cfg(test)]
    pub fn zero_weights(&mut self) {
        for p in self.params_mut() {
            p.value.fill(S::zero());
        }
    }
}

impl<S: Scalar> HasParams<S> for Discriminator<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        let mut v: Vec<&Parameter<S>> = self.convs.iter().flat_map(|c| c.params()).collect();
        v.extend(self.fc1.params());
        v.extend(self.fc2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        let mut v: Vec<&mut Parameter<S>> =
            self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        v.extend(self.fc1.params_mut());
        v.extend(self.fc2.params_mut());
        v
    }
}
