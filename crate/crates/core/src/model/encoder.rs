use ndarray::{Array3, Ix3};

use crate::error::{Error, Result};
use crate::model::config::{DF_SPATIAL, HIDDEN_CHANNELS};
use crate::nn::{Conv2d, HasParams, LeakyRelu, Parameter};
use crate::scalar::Scalar;

/// The encoding part: a fixed pattern of 3x3 convolutions, every one 64
/// channels wide with LeakyReLU(0.2), reducing the coarse HR image to the
/// 2x2x64 feature block `D_f`.
///
/// For 128 input the stride pattern is the literal
/// `s2 s1 s2 s1 s2 s1 s2 s1 s2 s2 s1` (11 layers, six stride-2). Smaller
/// power-of-two inputs keep the same tail and drop leading `s2 s1` pairs, so
/// a 64 input gets five stride-2 layers, and every size ends at 2x2.
#[derive(Debug, Clone)]
pub struct Encoder<S> {
    convs: Vec<Conv2d<S>>,
    acts: Vec<LeakyRelu<S, Ix3>>,
    in_size: usize,
}

/// The stride sequence for a given input size: `(n-2)` leading `s2 s1` pairs
/// followed by `s2 s2 s1`, where `n = log2(in_size/2)` stride-2 layers are
/// needed in total.
pub fn encoder_strides(in_size: usize) -> Vec<usize> {
    let n = (in_size / DF_SPATIAL).ilog2() as usize;
    assert!(n >= 2, "encoder needs at least a 8x8 input");
    let mut strides = Vec::new();
    for _ in 0..n - 2 {
        strides.push(2);
        strides.push(1);
    }
    strides.extend_from_slice(&[2, 2, 1]);
    strides
}

impl<S: Scalar> Encoder<S> {
    pub fn new(name: &str, in_size: usize, master_seed: u64) -> Self {
        let strides = encoder_strides(in_size);
        let convs = strides
            .iter()
            .enumerate()
            .map(|(i, &stride)| {
                let in_ch = if i == 0 { 3 } else { HIDDEN_CHANNELS };
                Conv2d::new(&format!("{name}.l{i:02}"), in_ch, HIDDEN_CHANNELS, stride, master_seed)
            })
            .collect::<Vec<_>>();
        let acts = (0..convs.len()).map(|_| LeakyRelu::new()).collect();
        Encoder { convs, acts, in_size }
    }

    /// Spatial sizes after each layer, starting with the input size.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut sizes = vec![self.in_size];
        let strides = encoder_strides(self.in_size);
        for s in strides {
            sizes.push(sizes.last().unwrap().div_ceil(s));
        }
        sizes
    }

    pub fn forward(&mut self, y_p: &Array3<S>) -> Result<Array3<S>> {
        let (c, h, w) = y_p.dim();
        if (c, h, w) != (3, self.in_size, self.in_size) {
            return Err(Error::invalid(format!(
                "encoder expects (3, {0}, {0}), got ({c}, {h}, {w})",
                self.in_size
            )));
        }
        let mut t = y_p.clone();
        for (conv, act) in self.convs.iter_mut().zip(&mut self.acts) {
            t = act.forward(&conv.forward(&t)?);
        }
        debug_assert_eq!(t.dim(), (HIDDEN_CHANNELS, DF_SPATIAL, DF_SPATIAL));
        Ok(t)
    }

    /// Gradient of the coarse image given the gradient of `D_f`.
    pub fn backward(&mut self, d_df: &Array3<S>) -> Result<Array3<S>> {
        let mut d = d_df.clone();
        for (conv, act) in self.convs.iter_mut().zip(&mut self.acts).rev() {
            d = conv.backward(&act.backward(&d))?;
        }
        Ok(d)
    }
}

impl<S: Scalar> HasParams<S> for Encoder<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        self.convs.iter().flat_map(|c| c.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        self.convs.iter_mut().flat_map(|c| c.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_pattern_is_the_literal_eleven_layers() {
        assert_eq!(encoder_strides(128), vec![2, 1, 2, 1, 2, 1, 2, 1, 2, 2, 1]);
    }

    #[test]
    fn reference_spatial_trace() {
        let enc = Encoder::<f32>::new("t", 128, 0);
        assert_eq!(
            enc.spatial_trace(),
            vec![128, 64, 64, 32, 32, 16, 16, 8, 8, 4, 2, 2]
        );
    }

    #[test]
    fn reduced_sizes_still_reach_two() {
        for size in [16usize, 32, 64] {
            let enc = Encoder::<f32>::new("t", size, 0);
            assert_eq!(*enc.spatial_trace().last().unwrap(), 2, "size {size}");
        }
        assert_eq!(encoder_strides(64).iter().filter(|&&s| s == 2).count(), 5);
    }

    #[test]
    fn forward_shape_is_2x2x64() {
        let mut enc = Encoder::<f32>::new("t", 32, 0);
        let x = Array3::<f32>::from_elem((3, 32, 32), 0.25);
        let df = enc.forward(&x).unwrap();
        assert_eq!(df.dim(), (64, 2, 2));
    }

    #[test]
    fn full_size_forward_shape() {
        let mut enc = Encoder::<f32>::new("t", 128, 0);
        let x = Array3::<f32>::from_elem((3, 128, 128), 0.25);
        assert_eq!(enc.forward(&x).unwrap().dim(), (64, 2, 2));
    }

    #[test]
    fn rejects_wrong_input() {
        let mut enc = Encoder::<f32>::new("t", 32, 0);
        let x = Array3::<f32>::zeros((3, 16, 16));
        assert!(enc.forward(&x).is_err());
    }
}
