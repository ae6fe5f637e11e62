use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which capsule construction feeds the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Semantic + probabilistic capsules (the complete model).
    Full,
    /// Semantic capsules only: no PIN, no KL term.
    V1,
    /// Probabilistic capsules only: no SEN; attributes still supervise AAN
    /// and shift the mean.
    V2,
    /// Classic capsules: a weight matrix plus dynamic routing replaces the
    /// whole capsule generation block.
    V3,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] =
        [ModelVariant::Full, ModelVariant::V1, ModelVariant::V2, ModelVariant::V3];

    /// Flattened capsule length the decoder consumes.
    pub fn caps_len(self, k: usize, d: usize) -> usize {
        match self {
            ModelVariant::Full => k * (d + 1),
            ModelVariant::V1 | ModelVariant::V3 => k * d,
            ModelVariant::V2 => k,
        }
    }

    pub fn has_semantic(self) -> bool {
        matches!(self, ModelVariant::Full | ModelVariant::V1)
    }

    pub fn has_probabilistic(self) -> bool {
        matches!(self, ModelVariant::Full | ModelVariant::V2)
    }

    pub fn has_attributes(self) -> bool {
        !matches!(self, ModelVariant::V3)
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelVariant::Full => "full",
            ModelVariant::V1 => "v1",
            ModelVariant::V2 => "v2",
            ModelVariant::V3 => "v3",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(ModelVariant::Full),
            "v1" => Ok(ModelVariant::V1),
            "v2" => Ok(ModelVariant::V2),
            "v3" => Ok(ModelVariant::V3),
            other => Err(Error::invalid(format!(
                "unknown model variant '{other}' (expected full, v1, v2, or v3)"
            ))),
        }
    }
}

/// Structural hyperparameters of the generator.
///
/// The reference configuration is 128x128 output with x8 scale. Smaller
/// power-of-two sizes keep the exact same component shapes — the encoder
/// always reduces to 2x2x64 and the decoder always starts there — and only
/// vary how many stride-2 / upsampling stages sit in between, which is what
/// makes CPU-sized test runs possible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Output (and training target) edge length: 16, 32, 64, or 128.
    pub hr_size: usize,
    /// Super-resolution factor; fixed at 8.
    pub scale: usize,
    /// Number of capsules.
    pub k: usize,
    /// Semantic capsule dimension.
    pub d: usize,
    pub variant: ModelVariant,
    /// Leading attribute outputs with ground-truth supervision.
    pub supervised_attrs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hr_size: 128,
            scale: 8,
            k: 64,
            d: 4,
            variant: ModelVariant::Full,
            supervised_attrs: 18,
        }
    }
}

/// Channel width of every hidden convolution.
pub const HIDDEN_CHANNELS: usize = 64;

/// Encoder output: `DF_SPATIAL x DF_SPATIAL x HIDDEN_CHANNELS`.
pub const DF_SPATIAL: usize = 2;

/// Dimension of each primary capsule in the v3 routing block.
pub const V3_PRIMARY_DIM: usize = 8;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.hr_size, 16 | 32 | 64 | 128) {
            return Err(Error::invalid(format!(
                "hr_size must be 16, 32, 64, or 128, got {}",
                self.hr_size
            )));
        }
        if self.scale != 8 {
            return Err(Error::invalid(format!("scale factor is fixed at 8, got {}", self.scale)));
        }
        if self.k == 0 || self.d == 0 {
            return Err(Error::invalid("capsule count k and dimension d must be positive"));
        }
        if self.supervised_attrs > self.k {
            return Err(Error::invalid(format!(
                "{} supervised attributes need k >= that, got k = {}",
                self.supervised_attrs, self.k
            )));
        }
        Ok(())
    }

    /// Input edge length: `hr_size / scale`.
    pub fn lr_size(&self) -> usize {
        self.hr_size / self.scale
    }

    /// Flattened encoder output length (2*2*64).
    pub fn df_len(&self) -> usize {
        DF_SPATIAL * DF_SPATIAL * HIDDEN_CHANNELS
    }

    /// Stride-2 encoder convs needed to reach the 2x2 feature map.
    pub fn encoder_stride2_layers(&self) -> u32 {
        (self.hr_size / DF_SPATIAL).ilog2()
    }

    /// Up-sampling convolutions needed to grow 2x2 back to `hr_size`.
    pub fn decoder_upsample_layers(&self) -> u32 {
        (self.hr_size / DF_SPATIAL).ilog2()
    }

    /// Flattened capsule length the decoder consumes for this variant.
    pub fn caps_len(&self) -> usize {
        self.variant.caps_len(self.k, self.d)
    }
}
