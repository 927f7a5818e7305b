//! Procedural front-view garment silhouettes with controllable binary
//! attributes. An attribute bit is 1 exactly when its feature is drawn.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{AnnotatedImage, Dataset, Image, Provenance};
use super::schema::{AttributeSchema, AttributeVector, GARMENT_TYPE_GROUP};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphAttribute {
    /// Deep V neckline.
    Vest,
    /// Dark collar band with a placket.
    Polo,
    /// Sleeves reach the hem instead of stopping at the chest.
    LongSleeve,
    /// Horizontal stripes over the fabric.
    Stripe,
    Red,
    Blue,
}

impl GlyphAttribute {
    pub const ALL: [GlyphAttribute; 6] = [
        GlyphAttribute::Vest,
        GlyphAttribute::Polo,
        GlyphAttribute::LongSleeve,
        GlyphAttribute::Stripe,
        GlyphAttribute::Red,
        GlyphAttribute::Blue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GlyphAttribute::Vest => "vest",
            GlyphAttribute::Polo => "polo",
            GlyphAttribute::LongSleeve => "long_sleeve",
            GlyphAttribute::Stripe => "stripe",
            GlyphAttribute::Red => "red",
            GlyphAttribute::Blue => "blue",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    fn group(self) -> &'static str {
        match self {
            GlyphAttribute::Vest | GlyphAttribute::Polo => GARMENT_TYPE_GROUP,
            GlyphAttribute::LongSleeve => "sleeve",
            GlyphAttribute::Stripe => "pattern",
            GlyphAttribute::Red | GlyphAttribute::Blue => "color",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeRate {
    pub attribute: GlyphAttribute,
    /// Bernoulli rate used during generation. Garment types are drawn
    /// jointly and mutually exclusively, so their rates must sum to <= 1.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphConfig {
    pub image_size: usize,
    pub count: usize,
    pub attributes: Vec<AttributeRate>,
    /// Random one-pixel offsets and small shade variation.
    #[serde(default = "default_jitter")]
    pub jitter: bool,
}

fn default_jitter() -> bool {
    true
}

impl GlyphConfig {
    /// All six attributes at the given garment-type rate, every other
    /// attribute at 0.5.
    pub fn six_attributes(count: usize, image_size: usize, garment_rate: f64) -> Self {
        let attributes = GlyphAttribute::ALL
            .into_iter()
            .map(|attribute| AttributeRate {
                attribute,
                rate: match attribute {
                    GlyphAttribute::Vest | GlyphAttribute::Polo => garment_rate,
                    _ => 0.5,
                },
            })
            .collect();
        Self {
            image_size,
            count,
            attributes,
            jitter: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 8 || !self.image_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "glyph image size {} must be a power of two >= 8",
                self.image_size
            )));
        }
        if self.count == 0 {
            return Err(Error::Config("glyph count must be at least 1".into()));
        }
        if self.attributes.is_empty() {
            return Err(Error::Config("at least one glyph attribute is required".into()));
        }
        let mut seen = Vec::new();
        for a in &self.attributes {
            if !(0.0..=1.0).contains(&a.rate) {
                return Err(Error::Config(format!(
                    "rate {} for `{}` outside [0, 1]",
                    a.rate,
                    a.attribute.name()
                )));
            }
            if seen.contains(&a.attribute) {
                return Err(Error::Config(format!("`{}` listed twice", a.attribute.name())));
            }
            seen.push(a.attribute);
        }
        let garment: f64 = self.rate(GlyphAttribute::Vest) + self.rate(GlyphAttribute::Polo);
        if garment > 1.0 + 1e-12 {
            return Err(Error::Config(format!("garment-type rates sum to {garment} > 1")));
        }
        Ok(())
    }

    fn rate(&self, attr: GlyphAttribute) -> f64 {
        self.attributes
            .iter()
            .find(|a| a.attribute == attr)
            .map_or(0.0, |a| a.rate)
    }

    pub fn schema(&self) -> Result<AttributeSchema> {
        let names: Vec<String> = self.attributes.iter().map(|a| a.attribute.name().to_string()).collect();
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for a in &self.attributes {
            groups
                .entry(a.attribute.group().to_string())
                .or_default()
                .push(a.attribute.name().to_string());
        }
        AttributeSchema::with_default_exclusivity(names, groups)
    }
}

/// Drawn features of one glyph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GlyphFeatures {
    pub vest: bool,
    pub polo: bool,
    pub long_sleeve: bool,
    pub stripe: bool,
    pub red: bool,
    pub blue: bool,
}

impl GlyphFeatures {
    fn has(&self, a: GlyphAttribute) -> bool {
        match a {
            GlyphAttribute::Vest => self.vest,
            GlyphAttribute::Polo => self.polo,
            GlyphAttribute::LongSleeve => self.long_sleeve,
            GlyphAttribute::Stripe => self.stripe,
            GlyphAttribute::Red => self.red,
            GlyphAttribute::Blue => self.blue,
        }
    }
}

/// Per-image nuisance variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub dx: i32,
    pub dy: i32,
    pub shade: f32,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        dx: 0,
        dy: 0,
        shade: 1.0,
    };
}

pub fn generate_glyphs(config: &GlyphConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let schema = config.schema()?;
    let p_vest = config.rate(GlyphAttribute::Vest);
    let p_polo = config.rate(GlyphAttribute::Polo);
    let has = |a| config.attributes.iter().any(|r| r.attribute == a);
    let items = (0..config.count)
        .map(|index| {
            let mut rng = stream(seed, Domain::Glyphs, index as u64);
            let garment: f64 = rng.random();
            let mut draw = |a: GlyphAttribute| {
                let u: f64 = rng.random();
                has(a) && u < config.rate(a)
            };
            let features = GlyphFeatures {
                vest: has(GlyphAttribute::Vest) && garment < p_vest,
                polo: has(GlyphAttribute::Polo) && garment >= p_vest && garment < p_vest + p_polo,
                long_sleeve: draw(GlyphAttribute::LongSleeve),
                stripe: draw(GlyphAttribute::Stripe),
                red: draw(GlyphAttribute::Red),
                blue: draw(GlyphAttribute::Blue),
            };
            let jitter = if config.jitter {
                Jitter {
                    dx: rng.random_range(-1..=1),
                    dy: rng.random_range(-1..=1),
                    shade: rng.random_range(0.92..1.08),
                }
            } else {
                Jitter::NONE
            };
            let bits: Vec<bool> = config.attributes.iter().map(|a| features.has(a.attribute)).collect();
            AnnotatedImage {
                id: format!("glyph-{index:05}"),
                pixels: render_glyph(config.image_size, &features, jitter),
                attrs: AttributeVector::from_bools(&bits),
            }
        })
        .collect();
    Dataset::new(
        schema,
        items,
        Provenance::Synthetic {
            seed,
            config: config.clone(),
        },
    )
}

const BACKGROUND: [f32; 3] = [0.88, 0.86, 0.80];
const TRIM: [f32; 3] = [0.08, 0.08, 0.10];

fn fabric_color(f: &GlyphFeatures) -> [f32; 3] {
    match (f.red, f.blue) {
        (false, false) => [0.45, 0.45, 0.45],
        (true, false) => [0.85, 0.15, 0.15],
        (false, true) => [0.15, 0.20, 0.85],
        (true, true) => [0.75, 0.15, 0.75],
    }
}

pub fn render_glyph(size: usize, f: &GlyphFeatures, jitter: Jitter) -> Image {
    let s = size as f32;
    let stripe_period = (size / 8).max(2) as i32;
    let fabric = fabric_color(f).map(|c| (c * jitter.shade).clamp(0.0, 1.0));
    let mut data = Vec::with_capacity(size * size * 3);
    for py in 0..size as i32 {
        for px in 0..size as i32 {
            let (gx, gy) = (px - jitter.dx, py - jitter.dy);
            let u = (gx as f32 + 0.5) / s;
            let v = (gy as f32 + 0.5) / s;
            let body = (0.34..=0.66).contains(&u) && (0.20..=0.88).contains(&v);
            let shoulder = ((0.30..0.34).contains(&u) || (0.66..0.70).contains(&u)) && (0.20..=0.30).contains(&v);
            let sleeve_end = if f.long_sleeve { 0.84 } else { 0.42 };
            let sleeve = ((0.14..0.30).contains(&u) || (0.70..0.86).contains(&u)) && (0.20..=sleeve_end).contains(&v);
            let mut color = BACKGROUND;
            if body || shoulder || sleeve {
                color = fabric;
                if f.stripe && gy.rem_euclid(2 * stripe_period) >= stripe_period {
                    color = color.map(|c| c * 0.55);
                }
            }
            let centre = (u - 0.5).abs();
            if f.vest {
                if (0.20..0.58).contains(&v) && centre <= 0.12 * (0.58 - v) / 0.38 {
                    color = BACKGROUND;
                }
            } else if f.polo {
                let collar = centre <= 0.12 && (0.20..0.28).contains(&v);
                let placket = centre <= 0.03 && (0.28..0.50).contains(&v);
                if collar || placket {
                    color = TRIM;
                }
            } else {
                let dv = v - 0.20;
                if dv >= 0.0 && centre * centre + dv * dv <= 0.09 * 0.09 {
                    color = BACKGROUND;
                }
            }
            data.extend(color.iter().map(|c| c * 2.0 - 1.0));
        }
    }
    Image::new(size, size, data).expect("glyph pixels are in range")
}
