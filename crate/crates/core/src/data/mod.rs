//! Attribute schemas, annotated image datasets, the synthetic glyph
//! generator and batch/target sampling.

mod dataset;
mod glyphs;
mod schema;

pub use dataset::{sample_target_attributes, to_u8, AnnotatedImage, BatchSampler, Dataset, Image, Provenance};
pub use glyphs::{generate_glyphs, render_glyph, AttributeRate, GlyphAttribute, GlyphConfig, GlyphFeatures, Jitter};
pub use schema::{AttributeSchema, AttributeVector, GARMENT_TYPE_GROUP};
