//! Image representation, file I/O, color conversion, resampling, degradation
//! models, and the PSNR/SSIM quality metrics.
//!
//! Intensities are kept in `[0, 1]` internally; the `[0, 255]` scale appears
//! only at file boundaries and inside the metrics, which follow the usual
//! 8-bit conventions.

mod color;
mod degrade;
mod filter;
mod metrics;
mod noise;
mod resize;

pub use color::rgb_to_y;
pub use degrade::{degrade, DegradationKind, DegradationSpec};
pub use filter::{gaussian_blur, gaussian_kernel};
pub use metrics::{psnr, ssim};
pub use noise::add_gaussian_noise;
pub use resize::bicubic_resize;

use std::path::Path;

use ndarray::{Array3, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A height x width x channels raster with intensities in `[0, 1]`.
///
/// Channels are 1 (luma) or 3 (RGB). The backing array is `(h, w, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S> {
    data: Array3<S>,
}

impl<S: Scalar> Image<S> {
    /// Wraps an existing `(h, w, c)` array. Channels must be 1 or 3.
    pub fn from_array(data: Array3<S>) -> Result<Self> {
        let c = data.len_of(Axis(2));
        if c != 1 && c != 3 {
            return Err(Error::invalid(format!("images have 1 or 3 channels, got {c}")));
        }
        Ok(Image { data })
    }

    /// An image filled with one intensity.
    pub fn constant(height: usize, width: usize, channels: usize, value: S) -> Self {
        Image {
            data: Array3::from_elem((height, width, channels), value),
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::constant(height, width, channels, S::zero())
    }

    /// Builds an image from a per-pixel closure `(y, x, c) -> value`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> S,
    ) -> Self {
        Image {
            data: Array3::from_shape_fn((height, width, channels), |(y, x, c)| f(y, x, c)),
        }
    }

    pub fn height(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn width(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height(), self.width(), self.channels())
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> S {
        self.data[(y, x, c)]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: S) {
        self.data[(y, x, c)] = v;
    }

    pub fn data(&self) -> &Array3<S> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<S> {
        &mut self.data
    }

    /// Clamps every intensity into `[0, 1]`.
    pub fn clamp_unit(&mut self) {
        self.data
            .mapv_inplace(|v| v.max(S::zero()).min(S::one()));
    }

    /// Snaps every intensity onto the 256-level grid of an 8-bit file, using
    /// the same arithmetic as [`Image::save_png`] followed by
    /// [`Image::load_png`]. Scoring outputs on this grid makes metrics agree
    /// bitwise with metrics on the saved PNGs.
    pub fn quantize_unit_u8(&mut self) {
        let scale = S::cast(1.0 / 255.0);
        self.data.mapv_inplace(|v| {
            let byte = (v.max(S::zero()).min(S::one()).as_f64() * 255.0).round();
            S::cast(byte) * scale
        });
    }

    /// Replicate-padded sample: out-of-range coordinates take the border pixel.
    pub(crate) fn sample_clamped(&self, y: isize, x: isize, c: usize) -> S {
        let yy = y.clamp(0, self.height() as isize - 1) as usize;
        let xx = x.clamp(0, self.width() as isize - 1) as usize;
        self.data[(yy, xx, c)]
    }

    /// Converts to channel-major `(c, h, w)` layout for the network layers.
    pub fn to_chw(&self) -> Array3<S> {
        let (h, w, c) = self.shape();
        Array3::from_shape_fn((c, h, w), |(ci, y, x)| self.data[(y, x, ci)])
    }

    /// Rebuilds an image from a channel-major `(c, h, w)` tensor.
    pub fn from_chw(chw: &Array3<S>) -> Result<Self> {
        let (c, h, w) = chw.dim();
        let data = Array3::from_shape_fn((h, w, c), |(y, x, ci)| chw[(ci, y, x)]);
        Image::from_array(data)
    }

    /// Reads an 8-bit PNG (or any format the decoder recognizes) as RGB.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let scale = S::cast(1.0 / 255.0);
        let data = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
            S::cast(rgb.get_pixel(x as u32, y as u32).0[c] as f64) * scale
        });
        Ok(Image { data })
    }

    /// Writes an 8-bit PNG, clamping and rounding intensities to `[0, 255]`.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (h, w, c) = self.shape();
        let to_byte = |v: S| -> u8 {
            let v = v.max(S::zero()).min(S::one()).as_f64();
            (v * 255.0).round() as u8
        };
        let result = if c == 1 {
            let buf: Vec<u8> = self.data.iter().map(|&v| to_byte(v)).collect();
            image::GrayImage::from_raw(w as u32, h as u32, buf)
                .expect("buffer sized from shape")
                .save(path)
        } else {
            let buf: Vec<u8> = self.data.iter().map(|&v| to_byte(v)).collect();
            image::RgbImage::from_raw(w as u32, h as u32, buf)
                .expect("buffer sized from shape")
                .save(path)
        };
        result.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Procedural test pattern: a few smooth random blobs per channel.
    ///
    /// Stands in for photographs wherever the test and demo tooling needs
    /// deterministic full-range content.
    pub fn synthetic_rgb(height: usize, width: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..5)
            .map(|_| {
                let cy = rng.random_range(0.0..1.0);
                let cx = rng.random_range(0.0..1.0);
                let sigma = rng.random_range(0.15..0.4);
                let amp = [
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                ];
                (cy, cx, sigma, amp)
            })
            .collect();
        let base = [
            rng.random_range(0.3..0.7),
            rng.random_range(0.3..0.7),
            rng.random_range(0.3..0.7),
        ];
        Image::from_fn(height, width, 3, |y, x, c| {
            let fy = (y as f64 + 0.5) / height as f64;
            let fx = (x as f64 + 0.5) / width as f64;
            let mut v = base[c];
            for (cy, cx, sigma, amp) in &blobs {
                let d2 = (fy - cy).powi(2) + (fx - cx).powi(2);
                v += amp[c] * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            S::cast(v.clamp(0.0, 1.0))
        })
    }

    /// Procedural test pattern with hard edges: overlapping filled
    /// rectangles and disks on a gradient background.
    ///
    /// Unlike [`Image::synthetic_rgb`], whose smooth blobs survive heavy
    /// downscaling almost unharmed, this content genuinely loses detail
    /// under the degradations, so restoration quality differences show up
    /// in the metrics.
    pub fn synthetic_sharp(height: usize, width: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grad = [
            rng.random_range(0.2..0.8),
            rng.random_range(0.2..0.8),
            rng.random_range(0.2..0.8),
        ];
        struct Shape {
            y0: f64,
            x0: f64,
            y1: f64,
            x1: f64,
            round: bool,
            color: [f64; 3],
        }
        let shapes: Vec<Shape> = (0..8)
            .map(|_| {
                let cy = rng.random_range(0.0..1.0);
                let cx = rng.random_range(0.0..1.0);
                let hh = rng.random_range(0.05..0.3);
                let hw = rng.random_range(0.05..0.3);
                Shape {
                    y0: cy - hh,
                    x0: cx - hw,
                    y1: cy + hh,
                    x1: cx + hw,
                    round: rng.random_bool(0.35),
                    color: [
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                    ],
                }
            })
            .collect();
        Image::from_fn(height, width, 3, |y, x, c| {
            let fy = (y as f64 + 0.5) / height as f64;
            let fx = (x as f64 + 0.5) / width as f64;
            let mut v = 0.15 + 0.7 * (grad[c] * fy + (1.0 - grad[c]) * fx);
            for s in &shapes {
                let inside = if s.round {
                    let ry = (s.y1 - s.y0) / 2.0;
                    let rx = (s.x1 - s.x0) / 2.0;
                    let dy = (fy - (s.y0 + ry)) / ry;
                    let dx = (fx - (s.x0 + rx)) / rx;
                    dy * dy + dx * dx <= 1.0
                } else {
                    fy >= s.y0 && fy <= s.y1 && fx >= s.x0 && fx <= s.x1
                };
                if inside {
                    v = s.color[c];
                }
            }
            S::cast(v.clamp(0.0, 1.0))
        })
    }
}
