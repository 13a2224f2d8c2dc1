//! Single-file checkpoint format shared by every network.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"ISMOCKPT" | u32 version | u32 header_len | header (JSON) | f32 payload
//! ```
//!
//! The JSON header carries the network kind, its resolved configuration,
//! the configuration hash and a `(name, shape, offset)` entry per tensor;
//! offsets count `f32` elements into the payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::module::Module;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ISMOCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct Header {
    kind: String,
    config: serde_json::Value,
    config_hash: String,
    tensors: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_module<T: Scalar, M: Module<T> + ?Sized>(
        kind: &str,
        config: serde_json::Value,
        config_hash: &str,
        module: &M,
    ) -> Self {
        let mut tensors = Vec::new();
        module.visit("", &mut |name, p| tensors.push((name.to_string(), p.value.cast::<f32>())));
        Self { kind: kind.to_string(), config, config_hash: config_hash.to_string(), tensors }
    }

    /// Copy stored values into `module`; names and shapes must match exactly.
    pub fn load_into<T: Scalar, M: Module<T> + ?Sized>(&self, module: &mut M) -> Result<(), NnError> {
        let mut idx = 0;
        let mut err = None;
        module.visit_mut("", &mut |name, p| {
            if err.is_some() {
                return;
            }
            match self.tensors.get(idx) {
                Some((n, t)) if n == name && t.shape() == p.value.shape() => p.value = t.cast(),
                Some((n, t)) => {
                    err = Some(format!("expected {name} {:?}, found {n} {:?}", p.value.shape(), t.shape()))
                }
                None => err = Some(format!("missing tensor {name}")),
            }
            idx += 1;
        });
        if let Some(e) = err {
            return Err(NnError::Checkpoint(e));
        }
        if idx != self.tensors.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {} tensors, module has {idx}",
                self.tensors.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(Entry { name: name.clone(), shape: t.shape().to_vec(), offset });
            offset += t.len();
        }
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            tensors: entries,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + offset * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let bad = |m: &str| NnError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header_bytes = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(header_bytes).map_err(|e| NnError::Checkpoint(format!("header: {e}")))?;
        let payload = &bytes[16 + hlen..];
        if payload.len() % 4 != 0 {
            return Err(bad("payload is not a whole number of f32 values"));
        }
        let floats: Vec<f32> =
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let len: usize = e.shape.iter().product();
            let data = floats
                .get(e.offset..e.offset + len)
                .ok_or_else(|| NnError::Checkpoint(format!("tensor {} runs past the payload", e.name)))?;
            tensors.push((e.name, Tensor::from_vec(&e.shape, data.to_vec())?));
        }
        Ok(Self { kind: header.kind, config: header.config, config_hash: header.config_hash, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
