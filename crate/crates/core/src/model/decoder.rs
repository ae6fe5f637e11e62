use ndarray::{Array1, Array3, Ix1, Ix3};

use crate::error::{Error, Result};
use crate::model::config::{DF_SPATIAL, HIDDEN_CHANNELS};
use crate::nn::{Conv2d, HasParams, LeakyRelu, Linear, Parameter, UpsampleConv};
use crate::scalar::Scalar;

/// Reconstruction decoder: project the capsule vector through a fully
/// connected layer back to a `(64, 2, 2)` feature map, then double the
/// spatial size with upsample-convs until the HR resolution is reached, and
/// map to RGB with a final 3x3 conv. For 128x128 output the spatial trace is
/// 2 -> 4 -> 8 -> 16 -> 32 -> 64 -> 128 (six upsampling stages).
#[derive(Debug, Clone)]
pub struct Decoder<S> {
    fc: Linear<S>,
    fc_act: LeakyRelu<S, Ix1>,
    ups: Vec<UpsampleConv<S>>,
    acts: Vec<LeakyRelu<S, Ix3>>,
    out_conv: Conv2d<S>,
    caps_len: usize,
    hr_size: usize,
}

impl<S: Scalar> Decoder<S> {
    pub fn new(name: &str, caps_len: usize, hr_size: usize, master_seed: u64) -> Self {
        let stages = (hr_size / DF_SPATIAL).ilog2() as usize;
        assert!(
            DF_SPATIAL << stages == hr_size,
            "HR size {hr_size} must be 2 times a power of two"
        );
        let fc = Linear::new(
            &format!("{name}.fc"),
            caps_len,
            DF_SPATIAL * DF_SPATIAL * HIDDEN_CHANNELS,
            master_seed,
        );
        let ups = (0..stages)
            .map(|i| {
                UpsampleConv::new(
                    &format!("{name}.up{i:02}"),
                    HIDDEN_CHANNELS,
                    HIDDEN_CHANNELS,
                    master_seed,
                )
            })
            .collect();
        let out_conv = Conv2d::new(&format!("{name}.out"), HIDDEN_CHANNELS, 3, 1, master_seed);
        Decoder {
            fc,
            fc_act: LeakyRelu::new(),
            ups,
            acts: (0..stages).map(|_| LeakyRelu::new()).collect(),
            out_conv,
            caps_len,
            hr_size,
        }
    }

    /// Spatial side length after the FC reshape and each upsampling stage.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut trace = vec![DF_SPATIAL];
        let mut s = DF_SPATIAL;
        for _ in &self.ups {
            s *= 2;
            trace.push(s);
        }
        trace
    }

    pub fn forward(&mut self, fac: &Array1<S>) -> Result<Array3<S>> {
        if fac.len() != self.caps_len {
            return Err(Error::invalid(format!(
                "decoder: capsule vector length {} does not match configured {}",
                fac.len(),
                self.caps_len
            )));
        }
        let h = self.fc_act.forward(&self.fc.forward(fac)?);
        let mut t = h
            .into_shape_with_order((HIDDEN_CHANNELS, DF_SPATIAL, DF_SPATIAL))
            .expect("fc output is standard layout");
        for (up, act) in self.ups.iter_mut().zip(&mut self.acts) {
            t = act.forward(&up.forward(&t)?);
        }
        let y = self.out_conv.forward(&t)?;
        debug_assert_eq!(y.dim(), (3, self.hr_size, self.hr_size));
        Ok(y)
    }

    /// Gradient of the capsule vector given the gradient of the output image.
    pub fn backward(&mut self, d_y: &Array3<S>) -> Result<Array1<S>> {
        let mut d = self.out_conv.backward(d_y)?;
        for (up, act) in self.ups.iter_mut().zip(&mut self.acts).rev() {
            d = up.backward(&act.backward(&d))?;
        }
        let d_flat = d
            .into_shape_with_order(DF_SPATIAL * DF_SPATIAL * HIDDEN_CHANNELS)
            .expect("feature gradient is standard layout");
        self.fc.backward(&self.fc_act.backward(&d_flat))
    }

    #[cfg(test)]
    pub fn zero_weights(&mut self) {
        for p in self.params_mut() {
            p.value.fill(S::zero());
        }
    }
}

impl<S: Scalar> HasParams<S> for Decoder<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        let mut v = self.fc.params();
        v.extend(self.ups.iter().flat_map(|u| u.params()));
        v.extend(self.out_conv.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        let mut v = self.fc.params_mut();
        v.extend(self.ups.iter_mut().flat_map(|u| u.params_mut()));
        v.extend(self.out_conv.params_mut());
        v
    }
}
