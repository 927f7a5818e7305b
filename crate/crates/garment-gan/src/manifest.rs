//! `manifest.csv` + `schema.json` datasets.
//!
//! The manifest header is `id,path,<attr_1>,...,<attr_n>`; `path` is relative
//! to the manifest's directory and names an RGB PNG. Category groups live in
//! an optional `schema.json` next to the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use garment_gan_core::data::{
    AnnotatedImage, AttributeSchema, AttributeVector, Dataset, Image, Provenance, GARMENT_TYPE_GROUP,
};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::png::{decode_rgb, write_png};

/// On-disk schema description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub attributes: Vec<String>,
    #[serde(default)]
    pub groups: BTreeMap<String, Vec<String>>,
    /// Groups with at most one attribute set; when absent, `garment-type`
    /// is exclusive if declared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusive: Option<BTreeSet<String>>,
}

impl SchemaFile {
    pub fn from_schema(schema: &AttributeSchema) -> Self {
        Self {
            attributes: schema.names().to_vec(),
            groups: schema.groups().clone(),
            exclusive: Some(schema.exclusive_groups().clone()),
        }
    }

    pub fn to_schema(&self) -> Result<AttributeSchema> {
        let exclusive = match &self.exclusive {
            Some(e) => e.clone(),
            None if self.groups.contains_key(GARMENT_TYPE_GROUP) => BTreeSet::from([GARMENT_TYPE_GROUP.to_string()]),
            None => BTreeSet::new(),
        };
        Ok(AttributeSchema::with_groups(
            self.attributes.clone(),
            self.groups.clone(),
            exclusive,
        )?)
    }
}

/// Path of the manifest file for `path`, which may name the file itself or
/// its directory.
fn manifest_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.csv")
    } else {
        path.to_path_buf()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = manifest_file(path.as_ref());
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let bad = |row: &str, detail: String| Error::Manifest {
        path: file.clone(),
        row: row.to_string(),
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(&file)
        .map_err(|e| bad("header", e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| bad("header", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 3 || header[0] != "id" || header[1] != "path" {
        return Err(bad("header", "expected `id,path,<attributes...>`".into()));
    }
    let names = header[2..].to_vec();
    let schema_path = dir.join("schema.json");
    let schema = if schema_path.exists() {
        let text = fs::read_to_string(&schema_path).map_err(io_err(&schema_path))?;
        let sf: SchemaFile = serde_json::from_str(&text)?;
        if sf.attributes != names {
            return Err(bad(
                "header",
                format!(
                    "columns {names:?} differ from schema.json attributes {:?}",
                    sf.attributes
                ),
            ));
        }
        sf.to_schema()?
    } else {
        AttributeSchema::new(names.clone())?
    };

    let mut items = Vec::new();
    let mut size: Option<(usize, usize)> = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(&format!("line {}", line + 2), e.to_string()))?;
        let id = record.get(0).unwrap_or("").to_string();
        let row = if id.is_empty() {
            format!("line {}", line + 2)
        } else {
            id.clone()
        };
        if record.len() != names.len() + 2 {
            return Err(bad(
                &row,
                format!(
                    "expected {} attribute cells, found {}",
                    names.len(),
                    record.len().saturating_sub(2)
                ),
            ));
        }
        let bits = record
            .iter()
            .skip(2)
            .map(|cell| match cell.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(bad(&row, format!("attribute cell `{other}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let image_path = dir.join(&record[1]);
        let bytes = fs::read(&image_path).map_err(|e| bad(&row, format!("{}: {e}", image_path.display())))?;
        let (w, h, rgb) = decode_rgb(&bytes).map_err(|e| bad(&row, e.to_string()))?;
        if !w.is_power_of_two() || !h.is_power_of_two() {
            return Err(bad(&row, format!("image is {w}x{h}; sides must be powers of two")));
        }
        match size {
            None => size = Some((w, h)),
            Some(s) if s != (w, h) => {
                return Err(bad(&row, format!("image is {w}x{h}, earlier rows are {}x{}", s.0, s.1)));
            }
            _ => {}
        }
        items.push(AnnotatedImage {
            id,
            pixels: Image::from_rgb8(h, w, &rgb).map_err(|e| bad(&row, e.to_string()))?,
            attrs: AttributeVector::new(bits).map_err(|e| bad(&row, e.to_string()))?,
        });
    }
    let provenance = Provenance::Manifest {
        path: file.display().to_string(),
    };
    Dataset::new(schema, items, provenance).map_err(|e| match e {
        garment_gan_core::Error::EmptyDataset => Error::Core(e),
        other => bad("dataset", other.to_string()),
    })
}

/// Writes `dataset` as `dir/manifest.csv`, `dir/schema.json` and
/// `dir/images/<id>.png`.
pub fn save_manifest(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(io_err(&images))?;
    let file = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&file).map_err(|e| Error::Manifest {
        path: file.clone(),
        row: "header".into(),
        detail: e.to_string(),
    })?;
    let mut header = vec!["id".to_string(), "path".to_string()];
    header.extend(dataset.schema().names().iter().cloned());
    let csv_err = |e: csv::Error| Error::Manifest {
        path: file.clone(),
        row: "write".into(),
        detail: e.to_string(),
    };
    writer.write_record(&header).map_err(csv_err)?;
    for item in dataset.items() {
        let rel = format!("images/{}.png", item.id);
        let png = dir.join(&rel);
        write_png(&png, item.pixels.width(), item.pixels.height(), &item.pixels.to_rgb8())?;
        let mut row = vec![item.id.clone(), rel];
        row.extend(item.attrs.bits().iter().map(|b| b.to_string()));
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(io_err(&file))?;
    let schema_path = dir.join("schema.json");
    let json = serde_json::to_string_pretty(&SchemaFile::from_schema(dataset.schema()))?;
    fs::write(&schema_path, json).map_err(io_err(&schema_path))?;
    Ok(file)
}
