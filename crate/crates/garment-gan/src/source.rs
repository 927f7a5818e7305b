//! `--data` arguments: a manifest path or `glyphs:<key>=<value>,...`.
//!
//! Glyph keys: `count` (default 2000), `size` (32), `seed` (0), `garment`
//! (rate of each garment-type bit, default 1/3), `jitter` (0/1) and any
//! attribute name (`vest`, `red`, ...) to override its rate.

use garment_gan_core::data::{generate_glyphs, Dataset, GlyphAttribute, GlyphConfig};

use crate::error::{Error, Result};
use crate::manifest::load_manifest;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Manifest(std::path::PathBuf),
    Glyphs { config: GlyphConfig, seed: u64 },
}

impl std::str::FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some(spec) = s
            .strip_prefix("glyphs:")
            .or(if s == "glyphs" { Some("") } else { None })
        else {
            return Ok(DataSource::Manifest(s.into()));
        };
        let bad = |detail: String| Error::DataSource(format!("{s}: {detail}"));
        let (mut count, mut size, mut seed, mut garment, mut jitter) = (2000usize, 32usize, 0u64, 1.0 / 3.0, true);
        let mut overrides = Vec::new();
        for part in spec.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("`{part}` is not key=value")))?;
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("`{k}` value `{v}` is not a number")))
            };
            match k {
                "count" => count = v.parse().map_err(|_| bad(format!("bad count `{v}`")))?,
                "size" => size = v.parse().map_err(|_| bad(format!("bad size `{v}`")))?,
                "seed" => seed = v.parse().map_err(|_| bad(format!("bad seed `{v}`")))?,
                "garment" => garment = num(v)?,
                "jitter" => jitter = v != "0" && v != "false",
                name => {
                    let attr = GlyphAttribute::from_name(name).ok_or_else(|| bad(format!("unknown key `{name}`")))?;
                    overrides.push((attr, num(v)?));
                }
            }
        }
        let mut config = GlyphConfig::six_attributes(count, size, garment);
        config.jitter = jitter;
        for (attr, rate) in overrides {
            for a in config.attributes.iter_mut().filter(|a| a.attribute == attr) {
                a.rate = rate;
            }
        }
        config.validate()?;
        Ok(DataSource::Glyphs { config, seed })
    }
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Manifest(path) => load_manifest(path),
            DataSource::Glyphs { config, seed } => Ok(generate_glyphs(config, *seed)?),
        }
    }
}
