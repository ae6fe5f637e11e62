use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{rgb_to_y, Image};
use crate::scalar::Scalar;

/// Luma plane scaled to `[0, 255]`. RGB images go through [`rgb_to_y`];
/// single-channel images are used as-is.
fn luma_255<S: Scalar>(img: &Image<S>) -> Result<Array2<f64>> {
    let plane = match img.channels() {
        1 => img.clone(),
        3 => rgb_to_y(img)?,
        c => {
            return Err(Error::invalid(format!(
                "metrics need a 1- or 3-channel image, got {c} channel(s)"
            )))
        }
    };
    let (h, w, _) = plane.shape();
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        plane.get(y, x, 0).as_f64() * 255.0
    }))
}

fn check_same_shape<S: Scalar>(a: &Image<S>, b: &Image<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "image shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB, `10 log10(255^2 / MSE)`, where the MSE is
/// taken over the luma channel on the 0–255 scale. Identical images yield
/// `+inf`.
pub fn psnr<S: Scalar>(reference: &Image<S>, candidate: &Image<S>) -> Result<f64> {
    check_same_shape(reference, candidate)?;
    let a = luma_255(reference)?;
    let b = luma_255(candidate)?;
    let mse = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// 11x11 Gaussian window with sigma 1.5, normalized to sum 1.
fn ssim_window() -> Array2<f64> {
    let sigma = 1.5f64;
    let mut w = Array2::zeros((11, 11));
    let mut total = 0.0;
    for i in 0..11 {
        for j in 0..11 {
            let dy = i as f64 - 5.0;
            let dx = j as f64 - 5.0;
            let v = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            w[(i, j)] = v;
            total += v;
        }
    }
    w.mapv_inplace(|v| v / total);
    w
}

/// Mean structural similarity over the luma channel on the 0–255 scale.
///
/// Windowed statistics use an 11x11 Gaussian (sigma 1.5) and only windows that
/// fit entirely inside the image contribute, so both dimensions must be at
/// least 11. Stabilizers are `C1 = (0.01 * 255)^2`, `C2 = (0.03 * 255)^2`.
pub fn ssim<S: Scalar>(reference: &Image<S>, candidate: &Image<S>) -> Result<f64> {
    check_same_shape(reference, candidate)?;
    let a = luma_255(reference)?;
    let b = luma_255(candidate)?;
    let (h, w) = a.dim();
    if h < 11 || w < 11 {
        return Err(Error::invalid(format!(
            "ssim needs at least an 11x11 image, got {h}x{w}"
        )));
    }
    let c1 = (0.01 * 255.0f64).powi(2);
    let c2 = (0.03 * 255.0f64).powi(2);
    let win = ssim_window();

    let mut sum = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for i in 0..11 {
                for j in 0..11 {
                    let wt = win[(i, j)];
                    let va = a[(y0 + i, x0 + j)];
                    let vb = b[(y0 + i, x0 + j)];
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    aa += wt * va * va;
                    bb += wt * vb * vb;
                    ab += wt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            sum += num / den;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}
