use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::glyphs::GlyphConfig;
use super::schema::{AttributeSchema, AttributeVector};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// RGB image stored height-major, channel-interleaved, values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width}x3 image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Shape(format!("pixel value {v} outside [-1, 1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Builds from 8-bit RGB, mapping `0..=255` onto `[-1, 1]`.
    pub fn from_rgb8(height: usize, width: usize, rgb: &[u8]) -> Result<Self> {
        let data = rgb.iter().map(|&v| v as f32 / 127.5 - 1.0).collect();
        Self::new(height, width, data)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Writes this image into item `index` of an NCHW tensor.
    pub fn write_chw<T: Scalar>(&self, out: &mut [T]) {
        let plane = self.height * self.width;
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = T::lift(px[c] as f64);
            }
        }
    }

    /// Reads item `index` of a `(n, 3, h, w)` tensor, clamping into range.
    pub fn from_tensor_item<T: Scalar>(t: &Tensor<T>, index: usize) -> Self {
        let s = t.shape();
        let plane = s.plane();
        let item = t.item(index);
        let mut data = Vec::with_capacity(plane * 3);
        for p in 0..plane {
            for c in 0..3 {
                data.push((item[c * plane + p].as_f64() as f32).clamp(-1.0, 1.0));
            }
        }
        Self {
            height: s.h,
            width: s.w,
            data,
        }
    }
}

pub fn to_u8(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5 + 0.5) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub id: String,
    pub pixels: Image,
    pub attrs: AttributeVector,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Manifest { path: String },
    Synthetic { seed: u64, config: GlyphConfig },
    Derived { from: String, operation: String },
}

/// Immutable collection of annotated images sharing one schema and size.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: AttributeSchema,
    items: Vec<AnnotatedImage>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: AttributeSchema, items: Vec<AnnotatedImage>, provenance: Provenance) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (h, w) = (items[0].pixels.height, items[0].pixels.width);
        let mut ids = BTreeSet::new();
        for item in &items {
            item.attrs.check_arity(&schema)?;
            if item.pixels.height != h || item.pixels.width != w {
                return Err(Error::Shape(format!(
                    "item `{}` is {}x{}, dataset is {h}x{w}",
                    item.id, item.pixels.height, item.pixels.width
                )));
            }
            if !ids.insert(item.id.as_str()) {
                return Err(Error::Schema(format!("duplicate item id `{}`", item.id)));
            }
        }
        Ok(Self {
            schema,
            items,
            provenance,
        })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn items(&self) -> &[AnnotatedImage] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `(height, width)` shared by all items.
    pub fn image_size(&self) -> (usize, usize) {
        (self.items[0].pixels.height, self.items[0].pixels.width)
    }

    pub fn find(&self, id: &str) -> Option<&AnnotatedImage> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Stacks the selected items into an NCHW tensor with their attributes.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> (Tensor<T>, Vec<AttributeVector>) {
        let (h, w) = self.image_size();
        let mut t = Tensor::zeros(Shape::new(indices.len(), 3, h, w));
        let mut attrs = Vec::with_capacity(indices.len());
        for (slot, &i) in indices.iter().enumerate() {
            self.items[i].pixels.write_chw(t.item_mut(slot));
            attrs.push(self.items[i].attrs.clone());
        }
        (t, attrs)
    }

    /// Items with at least one attribute of `group` set.
    pub fn narrow(&self, group: &str) -> Result<Self> {
        let members = self.schema.group_indices(group)?;
        let items: Vec<_> = self
            .items
            .iter()
            .filter(|it| members.iter().any(|&i| it.attrs.get(i)))
            .cloned()
            .collect();
        Self::new(
            self.schema.clone(),
            items,
            Provenance::Derived {
                from: self.describe(),
                operation: format!("narrow({group})"),
            },
        )
    }

    /// Seeded partition into `(train, test)`; both keep the original order.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test fraction {test_fraction} must lie in (0, 1)"
            )));
        }
        if self.items.len() < 2 {
            return Err(Error::Config("splitting requires at least 2 items".into()));
        }
        let n = self.items.len();
        let test_count = (num_traits::Float::round(n as f64 * test_fraction) as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, Domain::Split, 0));
        let mut is_test = alloc::vec![false; n];
        for &i in &order[..test_count] {
            is_test[i] = true;
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (item, t) in self.items.iter().zip(is_test) {
            if t {
                test.push(item.clone());
            } else {
                train.push(item.clone());
            }
        }
        let derived = |part: &str| Provenance::Derived {
            from: self.describe(),
            operation: format!("split({test_fraction}, seed={seed}).{part}"),
        };
        Ok((
            Self::new(self.schema.clone(), train, derived("train"))?,
            Self::new(self.schema.clone(), test, derived("test"))?,
        ))
    }

    /// Empirical frequency of every attribute.
    pub fn attribute_frequencies(&self) -> Vec<f64> {
        let mut counts = alloc::vec![0usize; self.schema.len()];
        for it in &self.items {
            for (c, &b) in counts.iter_mut().zip(it.attrs.bits()) {
                *c += b as usize;
            }
        }
        counts.iter().map(|&c| c as f64 / self.items.len() as f64).collect()
    }

    fn describe(&self) -> String {
        match &self.provenance {
            Provenance::Manifest { path } => path.clone(),
            Provenance::Synthetic { seed, .. } => format!("glyphs(seed={seed})"),
            Provenance::Derived { from, operation } => format!("{from}/{operation}"),
        }
    }
}

/// Shuffle-each-epoch batch order: batch `step` is a pure function of
/// `(seed, step)`.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    seed: u64,
    len: usize,
    batch_size: usize,
    cached_epoch: Option<(u64, Vec<usize>)>,
}

impl BatchSampler {
    pub fn new(seed: u64, len: usize, batch_size: usize) -> Self {
        assert!(len > 0 && batch_size > 0);
        Self {
            seed,
            len,
            batch_size,
            cached_epoch: None,
        }
    }

    fn permutation(&mut self, epoch: u64) -> &[usize] {
        let stale = self.cached_epoch.as_ref().is_none_or(|(e, _)| *e != epoch);
        if stale {
            let mut order: Vec<usize> = (0..self.len).collect();
            order.shuffle(&mut stream(self.seed, Domain::EpochShuffle, epoch));
            self.cached_epoch = Some((epoch, order));
        }
        &self.cached_epoch.as_ref().expect("just filled").1
    }

    pub fn indices(&mut self, step: u64) -> Vec<usize> {
        let start = step * self.batch_size as u64;
        (0..self.batch_size as u64)
            .map(|k| {
                let pos = start + k;
                let epoch = pos / self.len as u64;
                let within = (pos % self.len as u64) as usize;
                self.permutation(epoch)[within]
            })
            .collect()
    }
}

/// Target attributes for a batch: a uniformly random permutation of the
/// batch's own vectors, so the multiset of targets equals that of sources.
pub fn sample_target_attributes<R: rand::Rng + ?Sized>(
    batch_attrs: &[AttributeVector],
    rng: &mut R,
) -> Result<Vec<AttributeVector>> {
    if batch_attrs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = batch_attrs.to_vec();
    out.shuffle(rng);
    Ok(out)
}
