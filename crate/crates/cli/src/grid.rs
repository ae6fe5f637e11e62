//! Side-by-side comparison grids: HR reference, nearest-upsampled LR input,
//! bicubic baseline, and model output in one PNG strip.

use facn_core::image::Image;
use facn_core::Scalar;

/// Gap between panels, filled with mid-gray.
const GUTTER: usize = 2;

/// Nearest-neighbor upsampling by an integer factor (used to show the raw LR
/// input at HR scale without inventing detail).
pub fn nearest_upsample<S: Scalar>(img: &Image<S>, factor: usize) -> Image<S> {
    let (h, w, c) = img.shape();
    Image::from_fn(h * factor, w * factor, c, |y, x, ch| {
        img.get(y / factor, x / factor, ch)
    })
}

/// Compose same-sized panels into one horizontal strip with thin gutters.
pub fn compose_strip<S: Scalar>(panels: &[&Image<S>]) -> Image<S> {
    let (h, w, c) = panels[0].shape();
    let n = panels.len();
    let total_w = n * w + (n - 1) * GUTTER;
    let gray = S::cast(0.5);
    Image::from_fn(h, total_w, c, |y, x, ch| {
        let stride = w + GUTTER;
        let panel = (x / stride).min(n - 1);
        let off = x - panel * stride;
        if off < w {
            panels[panel].get(y, off, ch)
        } else {
            gray
        }
    })
}

/// The four-panel comparison for one evaluation image:
/// `HR | LR (nearest) | bicubic | model`.
pub fn comparison_grid<S: Scalar>(
    hr: &Image<S>,
    lr: &Image<S>,
    bicubic: &Image<S>,
    model: &Image<S>,
) -> Image<S> {
    let factor = (hr.height() / lr.height()).max(1);
    let lr_up = nearest_upsample(lr, factor);
    compose_strip(&[hr, &lr_up, bicubic, model])
}
