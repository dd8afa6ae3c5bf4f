//! Binary model bundles.
//!
//! Layout:
//!
//! ```text
//! "CMMD1\n"
//! u64 LE            metadata length
//! metadata JSON     { version, kind, model, tensors: [{name, rows, cols, offset}] }
//! f64 LE * n        packed tensor values in manifest order
//! u32 LE            CRC-32 of every byte between the magic and the checksum
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cmmd::{CmmdConfig, CmmdModel};
use crate::numcore::{ParamStore, Tensor2};
use crate::{Error, Result};

pub const MAGIC: &[u8; 6] = b"CMMD1\n";
pub const FORMAT_VERSION: u32 = 1;

/// Metadata documents above this size are rejected before allocation.
const MAX_METADATA: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Byte offset of the first value, relative to the start of the tensor block.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    version: u32,
    kind: String,
    model: serde_json::Value,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    extra: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// A model descriptor plus named tensors, independent of the model family.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub kind: String,
    pub model: serde_json::Value,
    /// Caller-owned metadata stored alongside the model (null when unused).
    pub extra: serde_json::Value,
    pub tensors: Vec<(String, Tensor2)>,
}

impl Bundle {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut manifest = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            manifest.push(TensorEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
                offset,
            });
            offset += 8 * t.len() as u64;
        }
        let meta = serde_json::to_vec(&Metadata {
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            model: self.model.clone(),
            extra: self.extra.clone(),
            tensors: manifest,
        })?;

        let mut out = Vec::with_capacity(MAGIC.len() + 12 + meta.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[MAGIC.len()..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("model bundle: {m}"));
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("bad magic"));
        }
        if bytes.len() < MAGIC.len() + 8 + 4 {
            return Err(bad("truncated"));
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
        if crc32fast::hash(&body[MAGIC.len()..]) != stored {
            return Err(bad("checksum mismatch"));
        }

        let rest = &body[MAGIC.len()..];
        let meta_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes"));
        if meta_len > MAX_METADATA || meta_len > (rest.len() - 8) as u64 {
            return Err(bad("metadata length out of range"));
        }
        let meta_len = meta_len as usize;
        let meta: Metadata = serde_json::from_slice(&rest[8..8 + meta_len])
            .map_err(|e| bad(&format!("metadata: {e}")))?;
        if meta.version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {}", meta.version)));
        }

        let block = &rest[8 + meta_len..];
        let mut expected = 0u64;
        let mut tensors = Vec::with_capacity(meta.tensors.len());
        for e in &meta.tensors {
            let n = e
                .rows
                .checked_mul(e.cols)
                .filter(|n| *n <= block.len() / 8)
                .ok_or_else(|| bad(&format!("tensor {} too large", e.name)))?;
            if e.offset != expected {
                return Err(bad(&format!("tensor {} at offset {}, expected {expected}", e.name, e.offset)));
            }
            let start = e.offset as usize;
            let end = start + 8 * n;
            if end > block.len() {
                return Err(bad(&format!("tensor {} runs past the end", e.name)));
            }
            let values = block[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((e.name.clone(), Tensor2::from_vec(e.rows, e.cols, values)?));
            expected = end as u64;
        }
        if expected != block.len() as u64 {
            return Err(bad("trailing bytes after tensors"));
        }
        Ok(Self {
            kind: meta.kind,
            model: meta.model,
            extra: meta.extra,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Data(format!(
                "model bundle holds a {:?} model, expected {kind:?}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Tensors as a parameter store, in bundle order.
    pub fn param_store(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, t) in &self.tensors {
            store
                .insert(name.clone(), t.clone())
                .map_err(|_| Error::Data(format!("duplicate tensor {name:?} in bundle")))?;
        }
        Ok(store)
    }
}

fn params_to_tensors(params: &ParamStore) -> Vec<(String, Tensor2)> {
    params
        .iter()
        .map(|(n, e)| (n.to_string(), e.value.clone()))
        .collect()
}

impl CmmdModel {
    pub const BUNDLE_KIND: &'static str = "cmmd";

    pub fn to_bundle(&self) -> Result<Bundle> {
        Ok(Bundle {
            kind: Self::BUNDLE_KIND.into(),
            model: serde_json::to_value(self.config())?,
            extra: serde_json::Value::Null,
            tensors: params_to_tensors(self.params()),
        })
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        bundle.expect_kind(Self::BUNDLE_KIND)?;
        let config: CmmdConfig = serde_json::from_value(bundle.model.clone())
            .map_err(|e| Error::Data(format!("model config: {e}")))?;
        Self::from_parts(config, bundle.param_store()?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bundle(&Bundle::load(path)?)
    }
}
