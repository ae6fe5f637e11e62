use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Normalized 2D Gaussian kernel. `size` must be odd, `sigma > 0`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Array2<f64>> {
    if size % 2 == 0 || size == 0 {
        return Err(Error::invalid(format!("gaussian kernel size must be odd, got {size}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as isize;
    let mut k = Array2::zeros((size, size));
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            k[((dy + r) as usize, (dx + r) as usize)] = v;
            total += v;
        }
    }
    k.mapv_inplace(|v| v / total);
    Ok(k)
}

/// Convolves with a Gaussian kernel, replicating border pixels.
pub fn gaussian_blur<S: Scalar>(img: &Image<S>, size: usize, sigma: f64) -> Result<Image<S>> {
    let kernel = gaussian_kernel(size, sigma)?;
    let r = (size / 2) as isize;
    let (h, w, channels) = img.shape();
    let mut out = Image::zeros(h, w, channels);
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let wgt = kernel[((dy + r) as usize, (dx + r) as usize)];
                        acc += wgt * img.sample_clamped(y as isize + dy, x as isize + dx, c).as_f64();
                    }
                }
                out.set(y, x, c, S::cast(acc));
            }
        }
    }
    Ok(out)
}
