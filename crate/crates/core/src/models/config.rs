use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the encoder/decoder pair and the discriminator/classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    /// Stride-2 blocks in the encoder (and transposed blocks in the decoder).
    pub encoder_blocks: usize,
    /// Channels of the first encoder block; each later block doubles them.
    pub base_channels: usize,
    pub n_attributes: usize,
    /// Stride-2 blocks in the shared discriminator/classifier trunk.
    #[serde(default)]
    pub disc_blocks: Option<usize>,
    /// First trunk width; defaults to `base_channels`.
    #[serde(default)]
    pub disc_channels: Option<usize>,
    /// Hidden width of each head; 0 makes the heads single linear maps.
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_head_hidden() -> usize {
    64
}

fn default_init_std() -> f64 {
    0.02
}

impl ModelConfig {
    pub fn new(image_size: usize, encoder_blocks: usize, base_channels: usize, n_attributes: usize) -> Self {
        Self {
            image_size,
            encoder_blocks,
            base_channels,
            n_attributes,
            disc_blocks: None,
            disc_channels: None,
            head_hidden: default_head_hidden(),
            init_std: default_init_std(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_blocks == 0 {
            return Err(Error::Config("encoder needs at least one block".into()));
        }
        if self.base_channels == 0 || self.n_attributes == 0 {
            return Err(Error::Config("channel and attribute counts must be positive".into()));
        }
        let factor = 1usize << self.encoder_blocks;
        if self.image_size == 0 || !self.image_size.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "image size {} is not divisible by 2^{}",
                self.image_size, self.encoder_blocks
            )));
        }
        let d = self.disc();
        let dfactor = 1usize << d.blocks;
        if !self.image_size.is_multiple_of(dfactor) {
            return Err(Error::Config(format!(
                "image size {} is not divisible by 2^{} (discriminator trunk)",
                self.image_size, d.blocks
            )));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        Ok(())
    }

    /// `(channels, height, width)` of the latent code.
    pub fn latent_layout(&self) -> (usize, usize, usize) {
        let side = self.image_size >> self.encoder_blocks;
        (self.base_channels << (self.encoder_blocks - 1), side, side)
    }

    pub fn disc(&self) -> DiscConfig {
        DiscConfig {
            image_size: self.image_size,
            blocks: self.disc_blocks.unwrap_or(self.encoder_blocks),
            base_channels: self.disc_channels.unwrap_or(self.base_channels),
            head_hidden: self.head_hidden,
            n_attributes: self.n_attributes,
            init_std: self.init_std,
        }
    }
}

/// Shape of a shared-trunk discriminator/classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscConfig {
    pub image_size: usize,
    /// May be 0, in which case the heads read raw pixels.
    pub blocks: usize,
    pub base_channels: usize,
    pub head_hidden: usize,
    pub n_attributes: usize,
    pub init_std: f64,
}

impl DiscConfig {
    pub fn trunk_features(&self) -> usize {
        if self.blocks == 0 {
            3 * self.image_size * self.image_size
        } else {
            let side = self.image_size >> self.blocks;
            (self.base_channels << (self.blocks - 1)) * side * side
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latent_layout_doubles_channels_per_block() {
        let c = ModelConfig::new(32, 4, 64, 6);
        assert_eq!(c.latent_layout(), (512, 2, 2));
        c.validate().unwrap();
    }

    #[test]
    fn divisibility_is_enforced() {
        assert!(ModelConfig::new(24, 4, 8, 3).validate().is_err());
        assert!(ModelConfig::new(32, 6, 8, 3).validate().is_err());
    }
}
