use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Extracts the BT.601 studio-swing luma channel, Matlab `rgb2ycbcr` style:
/// `Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255` with R,G,B in `[0, 1]`.
pub fn rgb_to_y<S: Scalar>(img: &Image<S>) -> Result<Image<S>> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!(
            "rgb_to_y needs a 3-channel image, got {} channel(s)",
            img.channels()
        )));
    }
    let (h, w, _) = img.shape();
    Ok(Image::from_fn(h, w, 1, |y, x, _| {
        let r = img.get(y, x, 0).as_f64();
        let g = img.get(y, x, 1).as_f64();
        let b = img.get(y, x, 2).as_f64();
        S::cast((16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0)
    }))
}
