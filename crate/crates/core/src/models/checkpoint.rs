use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "pgsr-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Model weights plus optional optimizer state and free-form metadata.
///
/// On disk: one line of JSON describing every tensor, then the tensors'
/// values as little-endian `f64`, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub trained: bool,
    /// Additional named tensors (optimizer moments).
    pub extra: BTreeMap<String, Tensor>,
    pub meta: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    trained: bool,
    config: ModelConfig,
    tensors: Vec<Entry>,
    extra: Vec<Entry>,
    meta: serde_json::Value,
}

fn entries(map: &BTreeMap<String, Tensor>) -> Vec<Entry> {
    map.iter()
        .map(|(name, t)| Entry {
            name: name.clone(),
            rows: t.rows(),
            cols: t.cols(),
        })
        .collect()
}

impl Checkpoint {
    pub fn new(params: ModelParams, trained: bool) -> Self {
        Self {
            params,
            trained,
            extra: BTreeMap::new(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            trained: self.trained,
            config: self.params.config.clone(),
            tensors: entries(&self.params.tensors),
            extra: entries(&self.extra),
            meta: self.meta.clone(),
        };
        serde_json::to_writer(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(8 * (self.params.param_count() + 1));
        for t in self.params.tensors.values().chain(self.extra.values()) {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let manifest: Manifest = serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format `{}`",
                manifest.format
            )));
        }
        if manifest.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                manifest.version
            )));
        }
        manifest.config.validate()?;
        let expected = manifest.config.tensor_shapes();
        let listed: Vec<(String, (usize, usize))> = manifest
            .tensors
            .iter()
            .map(|e| (e.name.clone(), (e.rows, e.cols)))
            .collect();
        let mut sorted = expected.clone();
        sorted.sort();
        if listed != sorted {
            return Err(Error::Checkpoint(
                "tensor list does not match the model config".into(),
            ));
        }

        let mut read_map = |list: &[Entry]| -> Result<BTreeMap<String, Tensor>> {
            let mut out = BTreeMap::new();
            for e in list {
                let mut bytes = vec![0u8; 8 * e.rows * e.cols];
                r.read_exact(&mut bytes)
                    .map_err(|_| Error::Checkpoint(format!("truncated data for `{}`", e.name)))?;
                let data = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect();
                out.insert(e.name.clone(), Tensor::new(e.rows, e.cols, data));
            }
            Ok(out)
        };
        let tensors = read_map(&manifest.tensors)?;
        let extra = read_map(&manifest.extra)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            params: ModelParams {
                config: manifest.config,
                tensors,
            },
            trained: manifest.trained,
            extra,
            meta: manifest.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(fs::File::open(path)?)
    }

    /// Loads a checkpoint and refuses untrained ones.
    pub fn load_trained(path: &Path) -> Result<Self> {
        let ck = Self::load(path)?;
        if !ck.trained {
            return Err(Error::Checkpoint(format!(
                "{} is marked untrained in its manifest",
                path.display()
            )));
        }
        Ok(ck)
    }
}
