use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::nn::param::{HasParams, Parameter};
use crate::scalar::Scalar;

/// 3x3 convolution with zero padding 1 and stride 1 or 2, over channel-major
/// `(c, h, w)` feature maps. Output spatial size is `ceil(in/stride)`.
///
/// The forward pass lowers the input to a column matrix and runs one matrix
/// product per call; the column matrix is kept for the backward pass, which
/// accumulates into the parameter gradients and returns the input gradient.
#[derive(Debug, Clone)]
pub struct Conv2d<S> {
    pub w: Parameter<S>,
    pub b: Parameter<S>,
    in_ch: usize,
    out_ch: usize,
    stride: usize,
    cache: Option<Cache<S>>,
}

#[derive(Debug, Clone)]
struct Cache<S> {
    col: Array2<S>,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

const K: usize = 3;

/// Output length of one spatial dimension: `ceil(in/stride)` for a 3x3
/// kernel with padding 1.
pub fn conv_out_len(in_len: usize, stride: usize) -> usize {
    (in_len - 1) / stride + 1
}

impl<S: Scalar> Conv2d<S> {
    /// He-initialized weights (fan-in `in_ch*9`), zero biases. Parameter
    /// names are `<name>.w` and `<name>.b`.
    pub fn new(name: &str, in_ch: usize, out_ch: usize, stride: usize, master_seed: u64) -> Self {
        assert!(stride == 1 || stride == 2, "conv stride must be 1 or 2");
        let w = Parameter::he(
            format!("{name}.w"),
            &[out_ch, in_ch, K, K],
            in_ch * K * K,
            master_seed,
        );
        let b = Parameter::zeros(format!("{name}.b"), &[out_ch]);
        Conv2d { w, b, in_ch, out_ch, stride, cache: None }
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn forward(&mut self, x: &Array3<S>) -> Result<Array3<S>> {
        let (c, h, w) = x.dim();
        if c != self.in_ch {
            return Err(Error::invalid(format!(
                "{}: expected {} input channels, got {c}",
                self.w.name, self.in_ch
            )));
        }
        let (col, oh, ow) = im2col(x, self.stride);
        let wmat = self
            .w
            .value
            .view()
            .into_shape_with_order((self.out_ch, self.in_ch * K * K))
            .expect("weights are standard layout");
        let mut y = wmat.dot(&col);
        for (o, mut row) in y.rows_mut().into_iter().enumerate() {
            let bias = self.b.value[o];
            row.mapv_inplace(|v| v + bias);
        }
        self.cache = Some(Cache { col, in_h: h, in_w: w, out_h: oh, out_w: ow });
        Ok(y.into_shape_with_order((self.out_ch, oh, ow)).expect("fresh array"))
    }

    /// Backward pass for the most recent `forward`. Accumulates weight and
    /// bias gradients and returns the gradient with respect to the input.
    pub fn backward(&mut self, dy: &Array3<S>) -> Result<Array3<S>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid(format!("{}: backward before forward", self.w.name)))?;
        let (c, oh, ow) = dy.dim();
        if (c, oh, ow) != (self.out_ch, cache.out_h, cache.out_w) {
            return Err(Error::invalid(format!(
                "{}: output gradient shape {:?} does not match forward output",
                self.w.name,
                dy.dim()
            )));
        }
        let dy_mat = dy
            .view()
            .into_shape_with_order((self.out_ch, oh * ow))
            .expect("gradients are standard layout");

        for (o, row) in dy_mat.rows().into_iter().enumerate() {
            self.b.grad[o] += row.sum();
        }

        let dw = dy_mat.dot(&cache.col.t());
        let mut wgrad = self
            .w
            .grad
            .view_mut()
            .into_shape_with_order((self.out_ch, self.in_ch * K * K))
            .expect("gradients are standard layout");
        wgrad += &dw;

        let wmat = self
            .w
            .value
            .view()
            .into_shape_with_order((self.out_ch, self.in_ch * K * K))
            .expect("weights are standard layout");
        let dcol = wmat.t().dot(&dy_mat);
        Ok(col2im(&dcol, self.in_ch, cache.in_h, cache.in_w, self.stride))
    }
}

impl<S: Scalar> HasParams<S> for Conv2d<S> {
    fn params(&self) -> Vec<&Parameter<S>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Lowers `(c, h, w)` to a `(c*9, out_h*out_w)` column matrix for a padded
/// 3x3 convolution. Out-of-image taps stay zero.
fn im2col<S: Scalar>(x: &Array3<S>, stride: usize) -> (Array2<S>, usize, usize) {
    let (c, h, w) = x.dim();
    let oh = conv_out_len(h, stride);
    let ow = conv_out_len(w, stride);
    let n = oh * ow;
    let xs = x.as_slice().expect("feature maps are standard layout");
    let mut col = Array2::<S>::zeros((c * K * K, n));
    let cs = col.as_slice_mut().expect("freshly allocated");
    for ci in 0..c {
        let plane = &xs[ci * h * w..(ci + 1) * h * w];
        for ki in 0..K {
            let Some((oy_lo, oy_hi)) = tap_range(h, oh, ki, stride) else { continue };
            for kj in 0..K {
                let Some((ox_lo, ox_hi)) = tap_range(w, ow, kj, stride) else { continue };
                let row_base = (ci * K * K + ki * K + kj) * n;
                for oy in oy_lo..=oy_hi {
                    let iy = oy * stride + ki - 1;
                    let dst = row_base + oy * ow;
                    for ox in ox_lo..=ox_hi {
                        cs[dst + ox] = plane[iy * w + ox * stride + kj - 1];
                    }
                }
            }
        }
    }
    (col, oh, ow)
}

/// Scatter-add inverse of `im2col`: folds a column-matrix gradient back onto
/// the input shape.
fn col2im<S: Scalar>(dcol: &Array2<S>, c: usize, h: usize, w: usize, stride: usize) -> Array3<S> {
    let oh = conv_out_len(h, stride);
    let ow = conv_out_len(w, stride);
    let n = oh * ow;
    debug_assert_eq!(dcol.dim(), (c * K * K, n));
    let ds = dcol.as_slice().expect("gradient columns are standard layout");
    let mut dx = Array3::<S>::zeros((c, h, w));
    let xs = dx.as_slice_mut().expect("freshly allocated");
    for ci in 0..c {
        for ki in 0..K {
            let Some((oy_lo, oy_hi)) = tap_range(h, oh, ki, stride) else { continue };
            for kj in 0..K {
                let Some((ox_lo, ox_hi)) = tap_range(w, ow, kj, stride) else { continue };
                let row_base = (ci * K * K + ki * K + kj) * n;
                for oy in oy_lo..=oy_hi {
                    let iy = oy * stride + ki - 1;
                    let src = row_base + oy * ow;
                    let plane = ci * h * w + iy * w;
                    for ox in ox_lo..=ox_hi {
                        xs[plane + ox * stride + kj - 1] += ds[src + ox];
                    }
                }
            }
        }
    }
    dx
}

/// Inclusive output-index range for which `out*stride + k - 1` lands inside
/// `[0, in_len)`, or `None` when no index does.
fn tap_range(in_len: usize, out_len: usize, k: usize, stride: usize) -> Option<(usize, usize)> {
    let lo = if k == 0 { 1 } else { 0 };
    let top = in_len as isize - k as isize;
    if top < 0 {
        return None;
    }
    let hi = (top as usize / stride).min(out_len - 1);
    if lo > hi {
        return None;
    }
    Some((lo, hi))
}
