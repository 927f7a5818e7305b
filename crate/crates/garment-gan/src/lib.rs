//! Files, checkpoints, the command line and the HTTP service around
//! [`garment_gan_core`].

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod manifest;
pub mod png;
pub mod run;
pub mod service;
pub mod source;

pub use error::{Error, Result};
pub use garment_gan_core as core;
