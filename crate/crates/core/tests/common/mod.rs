//! Independent reference implementations ("oracles") used by the
//! integration and acceptance suites. These are written directly from the
//! mathematical definitions and deliberately share no code with the library:
//! the bicubic oracle evaluates one dense 2-D weighted sum per output pixel
//! instead of separable passes, the KL oracle estimates the divergence by
//! Monte Carlo instead of the closed form, and the routing oracle is a plain
//! transcription of routing-by-agreement.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use facn_core::image::Image;

/// Keys cubic kernel with a = -0.5, written out from the piecewise formula.
fn keys_cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        1.5 * x * x * x - 2.5 * x * x + 1.0
    } else if x < 2.0 {
        -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// One dimension's resampling geometry: output pixel `j` draws from source
/// coordinate `u = (j + 0.5) * in/out - 0.5`; when downscaling with
/// antialias the kernel is stretched by the ratio; borders replicate.
struct DimWeights {
    first: isize,
    w: Vec<f64>,
}

fn dim_weights(in_len: usize, out_len: usize, antialias: bool) -> Vec<DimWeights> {
    let ratio = in_len as f64 / out_len as f64;
    let scale = if antialias && ratio > 1.0 { ratio } else { 1.0 };
    let half = 2.0 * scale;
    (0..out_len)
        .map(|j| {
            let u = (j as f64 + 0.5) * ratio - 0.5;
            let first = (u - half).floor() as isize;
            let last = (u + half).ceil() as isize;
            let mut w: Vec<f64> = (first..=last)
                .map(|s| keys_cubic((u - s as f64) / scale))
                .collect();
            let sum: f64 = w.iter().sum();
            for v in &mut w {
                *v /= sum;
            }
            DimWeights { first, w }
        })
        .collect()
}

/// Direct (non-separable) bicubic resample: every output pixel is one 2-D
/// weighted sum over the clamped source window, with the row and column
/// weights multiplied on the fly.
pub fn bicubic_oracle(img: &Image<f64>, out_h: usize, out_w: usize, antialias: bool) -> Image<f64> {
    let (in_h, in_w, channels) = img.shape();
    let rows = dim_weights(in_h, out_h, antialias);
    let cols = dim_weights(in_w, out_w, antialias);
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    Image::from_fn(out_h, out_w, channels, |y, x, c| {
        let ry = &rows[y];
        let cx = &cols[x];
        let mut acc = 0.0;
        for (ti, &wy) in ry.w.iter().enumerate() {
            let sy = clamp(ry.first + ti as isize, in_h);
            for (tj, &wx) in cx.w.iter().enumerate() {
                let sx = clamp(cx.first + tj as isize, in_w);
                acc += wy * wx * img.get(sy, sx, c);
            }
        }
        acc
    })
}

/// Monte-Carlo estimate of KL(N(mu, sigma2) || N(0, 1)) for one coordinate:
/// the sample mean of `log q(x) - log p(x)` with `x = mu + sigma * z`.
pub fn kl_mc_estimate(mu: f64, sigma2: f64, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = sigma2.sqrt();
    let mut acc = 0.0;
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let x = mu + sigma * z;
        // log q - log p; the 2*pi normalizers cancel.
        acc += -0.5 * sigma2.ln() - (x - mu) * (x - mu) / (2.0 * sigma2) + x * x / 2.0;
    }
    acc / n as f64
}

fn squash_ref(s: &Array1<f64>) -> Array1<f64> {
    let n2: f64 = s.iter().map(|v| v * v).sum();
    let n = n2.sqrt();
    s.mapv(|v| v * n / (1.0 + n2))
}

/// Plain transcription of routing-by-agreement over pre-computed prediction
/// weights: squash each 8-dim primary, form predictions `u_hat = W u`, then
/// iterate softmax coupling / weighted sum / squash, updating logits by the
/// prediction-output agreement between iterations.
pub fn routing_oracle(
    w: ArrayView4<'_, f64>,
    flat: &Array1<f64>,
    k: usize,
    d: usize,
    iterations: usize,
) -> Array2<f64> {
    let (n_primary, _, _, prim_d) = w.dim();
    assert_eq!(flat.len(), n_primary * prim_d);

    let u: Vec<Array1<f64>> = (0..n_primary)
        .map(|i| {
            let row =
                Array1::from_iter((0..prim_d).map(|b| flat[i * prim_d + b]));
            squash_ref(&row)
        })
        .collect();

    let mut u_hat = vec![vec![Array1::<f64>::zeros(d); k]; n_primary];
    for (i, u_i) in u.iter().enumerate() {
        for j in 0..k {
            for a in 0..d {
                u_hat[i][j][a] = (0..prim_d).map(|b| w[[i, j, a, b]] * u_i[b]).sum();
            }
        }
    }

    let mut b = Array2::<f64>::zeros((n_primary, k));
    let mut v = Array2::<f64>::zeros((k, d));
    for t in 1..=iterations {
        // Row-wise softmax of the logits.
        let mut c = Array2::<f64>::zeros((n_primary, k));
        for i in 0..n_primary {
            let m = b.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = b.row(i).iter().map(|&x| (x - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for j in 0..k {
                c[[i, j]] = exps[j] / z;
            }
        }
        for j in 0..k {
            let mut s = Array1::<f64>::zeros(d);
            for i in 0..n_primary {
                for a in 0..d {
                    s[a] += c[[i, j]] * u_hat[i][j][a];
                }
            }
            v.row_mut(j).assign(&squash_ref(&s));
        }
        if t < iterations {
            for i in 0..n_primary {
                for j in 0..k {
                    let agree: f64 = (0..d).map(|a| u_hat[i][j][a] * v[[j, a]]).sum();
                    b[[i, j]] += agree;
                }
            }
        }
    }
    v
}

/// Max absolute difference between two images of equal shape.
pub fn max_abs_diff(a: &Image<f64>, b: &Image<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
