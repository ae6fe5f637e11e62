use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{add_gaussian_noise, bicubic_resize, gaussian_blur, Image};
use crate::scalar::Scalar;

/// The three degradation pipelines used to synthesize low-resolution inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradationKind {
    /// Antialiased bicubic downscaling only.
    Bic,
    /// Bicubic downscaling followed by mild Gaussian noise (level 10).
    BicN,
    /// Gaussian blur, bicubic downscaling, then heavy noise (level 30).
    BBicN,
}

impl fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DegradationKind::Bic => "bic",
            DegradationKind::BicN => "bicn",
            DegradationKind::BBicN => "bbicn",
        };
        f.write_str(s)
    }
}

impl FromStr for DegradationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(DegradationKind::Bic),
            "bicn" => Ok(DegradationKind::BicN),
            "bbicn" => Ok(DegradationKind::BBicN),
            other => Err(Error::invalid(format!(
                "unknown degradation '{other}' (expected bic, bicn, or bbicn)"
            ))),
        }
    }
}

/// Full description of a degradation run. Use the per-kind constructors for
/// the standard settings; custom field values are validated by [`degrade`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    /// Downscaling factor; input height and width must be divisible by it.
    pub scale: usize,
    /// Blur kernel size; zero means no blur step.
    pub blur_size: usize,
    pub blur_sigma: f64,
    /// Noise standard deviation on the 0-255 scale; zero means no noise step.
    pub noise_level: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn bic(scale: usize) -> Self {
        Self { kind: DegradationKind::Bic, scale, blur_size: 0, blur_sigma: 0.0, noise_level: 0.0, seed: 0 }
    }

    pub fn bic_n(scale: usize, seed: u64) -> Self {
        Self { kind: DegradationKind::BicN, scale, blur_size: 0, blur_sigma: 0.0, noise_level: 10.0, seed }
    }

    pub fn b_bic_n(scale: usize, seed: u64) -> Self {
        Self { kind: DegradationKind::BBicN, scale, blur_size: 7, blur_sigma: 1.6, noise_level: 30.0, seed }
    }

    pub fn new(kind: DegradationKind, scale: usize, seed: u64) -> Self {
        match kind {
            DegradationKind::Bic => Self::bic(scale),
            DegradationKind::BicN => Self::bic_n(scale, seed),
            DegradationKind::BBicN => Self::b_bic_n(scale, seed),
        }
    }

    /// Checks that the field values are consistent with the kind.
    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::invalid(format!("degradation scale must be >= 2, got {}", self.scale)));
        }
        match self.kind {
            DegradationKind::Bic => {
                if self.noise_level != 0.0 || self.blur_size != 0 {
                    return Err(Error::invalid("bic degradation takes no blur and no noise"));
                }
            }
            DegradationKind::BicN => {
                if self.noise_level < 0.0 {
                    return Err(Error::invalid("bicn degradation needs a non-negative noise level"));
                }
                if self.blur_size != 0 {
                    return Err(Error::invalid("bicn degradation takes no blur"));
                }
            }
            DegradationKind::BBicN => {
                if self.noise_level < 0.0 {
                    return Err(Error::invalid("bbicn degradation needs a non-negative noise level"));
                }
                if self.blur_size == 0 || self.blur_size % 2 == 0 || self.blur_sigma <= 0.0 {
                    return Err(Error::invalid(
                        "bbicn degradation needs an odd blur size and positive sigma",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Runs the degradation pipeline on a high-resolution image: optional blur,
/// antialiased bicubic downscaling, optional noise. The result is exactly the
/// composition of the individual ops in that order, with a final clamp into
/// `[0, 1]` (the noise op already clamps, so the final clamp only matters for
/// bicubic overshoot on noise-free pipelines).
pub fn degrade<S: Scalar>(hr: &Image<S>, spec: &DegradationSpec) -> Result<Image<S>> {
    spec.validate()?;
    let (h, w, _) = hr.shape();
    if h % spec.scale != 0 || w % spec.scale != 0 {
        return Err(Error::invalid(format!(
            "image {h}x{w} is not divisible by scale {}",
            spec.scale
        )));
    }
    let mut img = if spec.blur_size > 0 {
        gaussian_blur(hr, spec.blur_size, spec.blur_sigma)?
    } else {
        hr.clone()
    };
    img = bicubic_resize(&img, h / spec.scale, w / spec.scale, true)?;
    if spec.noise_level > 0.0 {
        img = add_gaussian_noise(&img, spec.noise_level, spec.seed)?;
    }
    img.clamp_unit();
    Ok(img)
}
