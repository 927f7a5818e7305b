//! Attribute-editing GAN core: an encoder/decoder generator conditioned on
//! binary attributes, a shared-trunk discriminator/classifier, the joint and
//! split generator objectives, and the training and evaluation machinery.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and the HTTP
//! service live in the `garment-gan` crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod models;
pub mod nn;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
