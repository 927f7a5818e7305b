//! Binary checkpoints.
//!
//! Layout: the magic `GGCKPT01`, a little-endian `u64` header length, a JSON
//! header, then every array as `u32` name length, name, `u8` dtype code,
//! `u8` rank, `u64` dims and little-endian data. The header repeats the
//! array names and dims so truncation or tampering is reported against the
//! first array that does not match.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use garment_gan_core::data::AttributeSchema;
use garment_gan_core::eval::OracleClassifier;
use garment_gan_core::models::{DiscCls, DiscConfig, ModelConfig};
use garment_gan_core::params::ParamStore;
use garment_gan_core::scalar::DType;
use garment_gan_core::training::{TrainConfig, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::manifest::SchemaFile;

pub const MAGIC: &[u8; 8] = b"GGCKPT01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Training {
        model: ModelConfig,
        train: TrainConfig,
        step: u64,
        dc_updates: u64,
        generator_phases: u64,
        adam_steps: [u64; 3],
    },
    Oracle {
        disc: DiscConfig,
        required_accuracy: f64,
        holdout_accuracy: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub schema: SchemaFile,
    #[serde(flatten)]
    pub payload: Payload,
    pub arrays: Vec<ArrayEntry>,
}

struct Array {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn collect(prefix: &str, store: &ParamStore<f32>, out: &mut Vec<Array>) {
    for p in store.iter() {
        out.push(Array {
            name: format!("{prefix}/{}", p.name),
            dims: p.shape.clone(),
            data: p.data.clone(),
        });
    }
}

fn encode(header_schema: SchemaFile, payload: Payload, arrays: &[Array]) -> Result<Vec<u8>> {
    let header = Header {
        version: FORMAT_VERSION,
        schema: header_schema,
        payload,
        arrays: arrays
            .iter()
            .map(|a| ArrayEntry {
                name: a.name.clone(),
                dims: a.dims.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(json.len() + 16 + arrays.iter().map(|a| a.data.len() * 4 + 64).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for a in arrays {
        out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
        out.extend_from_slice(a.name.as_bytes());
        out.push(DType::F32.code());
        out.push(a.dims.len() as u8);
        for &d in &a.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &a.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

fn decode(path: &Path, bytes: &[u8]) -> Result<(Header, BTreeMap<String, Array>)> {
    let fail = |detail: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(fail("not a garment-gan checkpoint (bad magic)"));
    }
    let len = r.u64().ok_or_else(|| fail("truncated header"))? as usize;
    let json = r.take(len).ok_or_else(|| fail("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| fail(&format!("unreadable header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(fail(&format!(
            "version mismatch: file has format {}, this build reads {FORMAT_VERSION}",
            header.version
        )));
    }
    let mut arrays = BTreeMap::new();
    for entry in &header.arrays {
        let corrupt = |detail: &str| Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            array: entry.name.clone(),
            detail: detail.to_string(),
        };
        let name_len = r
            .take(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
            .ok_or_else(|| corrupt("truncated"))?;
        let name = r.take(name_len).ok_or_else(|| corrupt("truncated"))?;
        if name != entry.name.as_bytes() {
            return Err(corrupt(&format!(
                "found `{}` in its place",
                String::from_utf8_lossy(name)
            )));
        }
        let meta = r.take(2).ok_or_else(|| corrupt("truncated"))?;
        if DType::from_code(meta[0]) != Some(DType::F32) {
            return Err(corrupt(&format!("unsupported dtype code {}", meta[0])));
        }
        let mut dims = Vec::with_capacity(meta[1] as usize);
        for _ in 0..meta[1] {
            dims.push(r.u64().ok_or_else(|| corrupt("truncated"))? as usize);
        }
        if dims != entry.dims {
            return Err(corrupt(&format!("dims {dims:?} differ from header {:?}", entry.dims)));
        }
        let count: usize = dims.iter().product();
        let raw = r.take(count * 4).ok_or_else(|| corrupt("truncated data"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(corrupt(&format!("non-finite value at element {i}")));
        }
        arrays.insert(
            entry.name.clone(),
            Array {
                name: entry.name.clone(),
                dims,
                data,
            },
        );
    }
    if r.pos != bytes.len() {
        return Err(fail(&format!(
            "{} trailing bytes after the last array",
            bytes.len() - r.pos
        )));
    }
    Ok((header, arrays))
}

fn fill(path: &Path, prefix: &str, store: &mut ParamStore<f32>, arrays: &mut BTreeMap<String, Array>) -> Result<()> {
    for p in store.iter_mut() {
        let key = format!("{prefix}/{}", p.name);
        let a = arrays.remove(&key).ok_or_else(|| Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            array: key.clone(),
            detail: "missing".into(),
        })?;
        if a.dims != p.shape {
            return Err(Error::CorruptCheckpoint {
                path: path.to_path_buf(),
                array: key,
                detail: format!("dims {:?} do not fit the model's {:?}", a.dims, p.shape),
            });
        }
        p.data = a.data;
    }
    Ok(())
}

fn no_leftovers(path: &Path, arrays: &BTreeMap<String, Array>) -> Result<()> {
    match arrays.values().next() {
        Some(a) => Err(Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            array: a.name.clone(),
            detail: "not part of the model".into(),
        }),
        None => Ok(()),
    }
}

fn read(path: &Path) -> Result<(Header, BTreeMap<String, Array>)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(path, &bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

const SECTIONS: [&str; 9] = [
    "generator.params",
    "generator.buffers",
    "disc.params",
    "opt_dc.m",
    "opt_dc.v",
    "opt_g.m",
    "opt_g.v",
    "opt_g_cls.m",
    "opt_g_cls.v",
];

fn sections(state: &TrainState<f32>) -> [&ParamStore<f32>; 9] {
    [
        &state.generator.params,
        &state.generator.buffers,
        &state.disc.params,
        &state.opt_dc.first,
        &state.opt_dc.second,
        &state.opt_g.first,
        &state.opt_g.second,
        &state.opt_g_cls.first,
        &state.opt_g_cls.second,
    ]
}

/// A training state with the configuration and schema it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schema: AttributeSchema,
    pub config: TrainConfig,
    pub state: TrainState<f32>,
}

pub fn checkpoint_bytes(schema: &AttributeSchema, config: &TrainConfig, state: &TrainState<f32>) -> Result<Vec<u8>> {
    let mut arrays = Vec::new();
    for (prefix, store) in SECTIONS.iter().zip(sections(state)) {
        collect(prefix, store, &mut arrays);
    }
    let payload = Payload::Training {
        model: config.model,
        train: config.clone(),
        step: state.step,
        dc_updates: state.dc_updates,
        generator_phases: state.generator_phases,
        adam_steps: [state.opt_dc.steps, state.opt_g.steps, state.opt_g_cls.steps],
    };
    encode(SchemaFile::from_schema(schema), payload, &arrays)
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    schema: &AttributeSchema,
    config: &TrainConfig,
    state: &TrainState<f32>,
) -> Result<()> {
    write_atomic(path.as_ref(), &checkpoint_bytes(schema, config, state)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let (header, mut arrays) = read(path)?;
    let Payload::Training {
        model,
        train,
        step,
        dc_updates,
        generator_phases,
        adam_steps,
    } = header.payload
    else {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            detail: "file holds an oracle, not a training checkpoint".into(),
        });
    };
    let schema = header.schema.to_schema()?;
    if schema.len() != model.n_attributes || train.model != model {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            detail: "schema and model configuration disagree".into(),
        });
    }
    let mut state = TrainState::<f32>::new(&train)?;
    {
        let TrainState {
            generator,
            disc,
            opt_dc,
            opt_g,
            opt_g_cls,
            ..
        } = &mut state;
        let stores: [&mut ParamStore<f32>; 9] = [
            &mut generator.params,
            &mut generator.buffers,
            &mut disc.params,
            &mut opt_dc.first,
            &mut opt_dc.second,
            &mut opt_g.first,
            &mut opt_g.second,
            &mut opt_g_cls.first,
            &mut opt_g_cls.second,
        ];
        for (prefix, store) in SECTIONS.iter().zip(stores) {
            fill(path, prefix, store, &mut arrays)?;
        }
    }
    no_leftovers(path, &arrays)?;
    state.step = step;
    state.dc_updates = dc_updates;
    state.generator_phases = generator_phases;
    state.opt_dc.steps = adam_steps[0];
    state.opt_g.steps = adam_steps[1];
    state.opt_g_cls.steps = adam_steps[2];
    Ok(Checkpoint {
        schema,
        config: train,
        state,
    })
}

pub fn save_oracle(path: impl AsRef<Path>, schema: &AttributeSchema, oracle: &OracleClassifier) -> Result<()> {
    let mut arrays = Vec::new();
    collect("oracle", &oracle.model.params, &mut arrays);
    let payload = Payload::Oracle {
        disc: *oracle.model.config(),
        required_accuracy: oracle.required_accuracy,
        holdout_accuracy: oracle.holdout_accuracy.clone(),
    };
    write_atomic(
        path.as_ref(),
        &encode(SchemaFile::from_schema(schema), payload, &arrays)?,
    )
}

pub fn load_oracle(path: impl AsRef<Path>) -> Result<(AttributeSchema, OracleClassifier)> {
    let path = path.as_ref();
    let (header, mut arrays) = read(path)?;
    let Payload::Oracle {
        disc,
        required_accuracy,
        holdout_accuracy,
    } = header.payload
    else {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            detail: "file holds a training checkpoint, not an oracle".into(),
        });
    };
    let schema = header.schema.to_schema()?;
    let mut model = DiscCls::<f32>::new(
        disc,
        &mut garment_gan_core::rng::stream(0, garment_gan_core::rng::Domain::Oracle, 0),
    )?;
    fill(path, "oracle", &mut model.params, &mut arrays)?;
    no_leftovers(path, &arrays)?;
    let oracle = OracleClassifier {
        model,
        names: schema.names().to_vec(),
        required_accuracy,
        holdout_accuracy,
    };
    Ok((schema, oracle))
}

/// `checkpoints/step_<k>.ckpt` under a run directory.
pub fn checkpoint_path(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join("checkpoints").join(format!("step_{step}.ckpt"))
}

/// FNV-1a digest of a file's bytes, used to identify a loaded checkpoint.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
