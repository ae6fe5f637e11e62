//! Bicubic resampling with Matlab `imresize` semantics.
//!
//! The kernel is the Keys cubic with `a = -0.5`. When a dimension shrinks and
//! antialiasing is on, the kernel is stretched by the scale factor so it
//! low-passes while it interpolates. Borders replicate the edge pixel.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Keys bicubic kernel, `a = -0.5`, support `[-2, 2]`.
pub(crate) fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x.powi(3) - (A + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        A * x.powi(3) - 5.0 * A * x.powi(2) + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// One output row/column of resampling weights over clamped source indices.
struct Taps {
    first: isize,
    weights: Vec<f64>,
}

/// Precomputes the contribution of source pixels to each output pixel along
/// one dimension, following Matlab's `contributions`: output coordinate
/// `u = (j + 0.5) * in/out - 0.5`, kernel stretched by `in/out` when
/// downscaling with antialias, weights normalized to sum 1.
fn contributions(in_len: usize, out_len: usize, antialias: bool) -> Vec<Taps> {
    let ratio = in_len as f64 / out_len as f64; // > 1 when downscaling
    let (kernel_scale, width) = if antialias && ratio > 1.0 {
        (ratio, 4.0 * ratio)
    } else {
        (1.0, 4.0)
    };
    let tap_count = width.ceil() as isize + 2;

    (0..out_len)
        .map(|j| {
            let u = (j as f64 + 0.5) * ratio - 0.5;
            let first = (u - width / 2.0).floor() as isize;
            let mut weights: Vec<f64> = (0..tap_count)
                .map(|t| cubic_kernel((u - (first + t) as f64) / kernel_scale))
                .collect();
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            Taps { first, weights }
        })
        .collect()
}

/// Resizes with the Keys bicubic kernel (`a = -0.5`).
///
/// With `antialias` the kernel widens by the scale factor on downscaling
/// dimensions, matching Matlab's default. Downscaling without antialias is
/// rejected: the degradation models are defined in terms of the antialiased
/// path.
pub fn bicubic_resize<S: Scalar>(
    img: &Image<S>,
    out_h: usize,
    out_w: usize,
    antialias: bool,
) -> Result<Image<S>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "resize target {out_h}x{out_w} has a zero dimension"
        )));
    }
    let (in_h, in_w, channels) = img.shape();
    if !antialias && (out_h < in_h || out_w < in_w) {
        return Err(Error::invalid(
            "downscaling requires antialias (Matlab imresize semantics)".to_string(),
        ));
    }

    let cols = contributions(in_w, out_w, antialias);
    let rows = contributions(in_h, out_h, antialias);

    // Horizontal pass: (in_h, out_w), then vertical pass: (out_h, out_w).
    let mut mid = Image::zeros(in_h, out_w, channels);
    for y in 0..in_h {
        for (x, taps) in cols.iter().enumerate() {
            for c in 0..channels {
                let mut acc = 0.0;
                for (t, &w) in taps.weights.iter().enumerate() {
                    acc += w * img.sample_clamped(y as isize, taps.first + t as isize, c).as_f64();
                }
                mid.set(y, x, c, S::cast(acc));
            }
        }
    }

    let mut out = Image::zeros(out_h, out_w, channels);
    for (y, taps) in rows.iter().enumerate() {
        for x in 0..out_w {
            for c in 0..channels {
                let mut acc = 0.0;
                for (t, &w) in taps.weights.iter().enumerate() {
                    acc += w * mid.sample_clamped(taps.first + t as isize, x as isize, c).as_f64();
                }
                out.set(y, x, c, S::cast(acc));
            }
        }
    }
    Ok(out)
}
