use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Precision;

/// How a Z-block brings its pre-pool features down to the fused resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SkipAlign {
    /// 2×2 max pool of the pre-pool features.
    #[default]
    Pool,
    /// Central `h/2 × w/2` crop of the pre-pool features.
    Crop,
}

impl fmt::Display for SkipAlign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipAlign::Pool => "pool",
            SkipAlign::Crop => "crop",
        })
    }
}

impl FromStr for SkipAlign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pool" => Ok(SkipAlign::Pool),
            "crop" => Ok(SkipAlign::Crop),
            _ => Err(Error::config(format!(
                "skip_align must be pool or crop, got {s:?}"
            ))),
        }
    }
}

/// Which encoder block the network is assembled from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Channels double by concatenating aligned pre-pool features with the
    /// post-pool convolution output.
    #[default]
    ZNet,
    /// Channels double directly through the post-pool convolution.
    UNet,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::ZNet => "znet",
            Architecture::UNet => "unet",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "znet" => Ok(Architecture::ZNet),
            "unet" => Ok(Architecture::UNet),
            _ => Err(Error::config(format!(
                "architecture must be znet or unet, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ZNetConfig {
    /// Number of encoder/decoder block pairs.
    pub depth: usize,
    /// Output channels of the first encoder block; doubles per level.
    pub base_channels: usize,
    /// Input `(height, width)`, each divisible by `2^depth`.
    pub input_size: (usize, usize),
    pub in_channels: usize,
    pub skip_align: SkipAlign,
    pub precision: Precision,
}

impl Default for ZNetConfig {
    fn default() -> Self {
        ZNetConfig {
            depth: 5,
            base_channels: 32,
            input_size: (256, 256),
            in_channels: 1,
            skip_align: SkipAlign::Pool,
            precision: Precision::F32,
        }
    }
}

impl ZNetConfig {
    /// Depth-2, base-4 network on 32×32 inputs.
    pub fn tiny() -> Self {
        ZNetConfig {
            depth: 2,
            base_channels: 4,
            input_size: (32, 32),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth must be at least 1"));
        }
        if self.base_channels < 2 || self.base_channels % 2 != 0 {
            return Err(Error::config(format!(
                "base_channels must be even and >= 2, got {}",
                self.base_channels
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::config("in_channels must be at least 1"));
        }
        let unit = 1usize
            .checked_shl(self.depth as u32)
            .ok_or_else(|| Error::config("depth too large"))?;
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % unit != 0 || w % unit != 0 {
            return Err(Error::config(format!(
                "input size {h}x{w} must be divisible by 2^{} = {unit}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Output channels of encoder level `k` (0-based).
    pub fn encoder_channels(&self, k: usize) -> usize {
        self.base_channels << k
    }

    /// Spatial size after encoder level `k` has pooled.
    pub fn encoder_resolution(&self, k: usize) -> (usize, usize) {
        (self.input_size.0 >> (k + 1), self.input_size.1 >> (k + 1))
    }
}
