//! Encoder, attribute-conditioned decoder and the shared-trunk
//! discriminator/classifier.

mod config;
mod disc;
mod generator;

pub use config::{DiscConfig, ModelConfig};
pub use disc::{sigmoid, DiscCls};
pub use generator::{Generator, LatentCode};

pub(crate) use generator::DecodeTape;
