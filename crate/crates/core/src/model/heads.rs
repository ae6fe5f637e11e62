use ndarray::{Array1, Array3, Ix3};

use crate::error::Result;
use crate::model::config::{DF_SPATIAL, HIDDEN_CHANNELS};
use crate::nn::{Conv2d, HasParams, LeakyRelu, Linear, Parameter};
use crate::scalar::Scalar;

/// The shared head architecture of the capsule generation block: three 3x3
/// stride-1 convolutions (64 channels, LeakyReLU) over `D_f`, flattened into
/// one fully connected layer. SEN, AAN, and PIN are three independent
/// instances differing only in output width (`k*d`, `k`, and `2k`).
///
/// The FC output is returned raw; AAN's sigmoid and PIN's mean/log-variance
/// split belong to the caller.
#[derive(Debug, Clone)]
pub struct CapsHead<S> {
    convs: Vec<Conv2d<S>>,
    acts: Vec<LeakyRelu<S, Ix3>>,
    fc: Linear<S>,
}

impl<S: Scalar> CapsHead<S> {
    pub fn new(name: &str, out_features: usize, master_seed: u64) -> Self {
        let convs = (0..3)
            .map(|i| {
                Conv2d::new(
                    &format!("{name}.conv{i}"),
                    HIDDEN_CHANNELS,
                    HIDDEN_CHANNELS,
                    1,
                    master_seed,
                )
            })
            .collect();
        let in_features = DF_SPATIAL * DF_SPATIAL * HIDDEN_CHANNELS;
        CapsHead {
            convs,
            acts: (0..3).map(|_| LeakyRelu::new()).collect(),
            fc: Linear::new(&format!("{name}.fc"), in_features, out_features, master_seed),
        }
    }

    pub fn out_features(&self) -> usize {
        self.fc.out_features()
    }

    /// Parameter count of the fully connected layer alone (weights + bias).
    pub fn fc_param_count(&self) -> usize {
        self.fc.w.len() + self.fc.b.len()
    }

    pub fn forward(&mut self, df: &Array3<S>) -> Result<Array1<S>> {
        let mut t = df.clone();
        for (conv, act) in self.convs.iter_mut().zip(&mut self.acts) {
            t = act.forward(&conv.forward(&t)?);
        }
        let flat = t
            .into_shape_with_order(DF_SPATIAL * DF_SPATIAL * HIDDEN_CHANNELS)
            .expect("trunk output is standard layout");
        self.fc.forward(&flat)
    }

    /// Gradient of `D_f` given the gradient of the FC output.
    pub fn backward(&mut self, d_out: &Array1<S>) -> Result<Array3<S>> {
        let d_flat = self.fc.backward(d_out)?;
        let mut d = d_flat
            .into_shape_with_order((HIDDEN_CHANNELS, DF_SPATIAL, DF_SPATIAL))
            .expect("flat gradient is standard layout");
        for (conv, act) in self.convs.iter_mut().zip(&mut self.acts).rev() {
            d = conv.backward(&act.backward(&d))?;
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

impl<S: Scalar> HasParams<S> for CapsHead<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        let mut v: Vec<&Parameter<S>> = self.convs.iter().flat_map(|c| c.params()).collect();
        v.extend(self.fc.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        let mut v: Vec<&mut Parameter<S>> =
            self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        v.extend(self.fc.params_mut());
        v
    }
}
