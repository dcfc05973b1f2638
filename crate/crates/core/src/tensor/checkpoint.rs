//! Binary checkpoint layout:
//!
//! ```text
//! "QXCK" | u32 version | u32 header_len | header JSON | f32 blobs (LE)
//! ```
//!
//! The header holds the tensor directory (name, shape, byte offset relative to
//! the start of the blob section), a vocabulary fingerprint and free-form
//! model configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QXCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    vocab_fingerprint: String,
    config: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus the metadata needed to rebuild a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub vocab_fingerprint: String,
    pub config: serde_json::Value,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut offset = 0u64;
        for (name, t) in self.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += 4 * t.numel() as u64;
        }
        let header = serde_json::to_vec(&Header {
            version: CHECKPOINT_VERSION,
            vocab_fingerprint: self.vocab_fingerprint.clone(),
            config: self.config.clone(),
            tensors,
        })?;
        let mut out = Vec::with_capacity(12 + header.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in self.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {})",
                version, CHECKPOINT_VERSION
            )));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {}", e)))?;
        let blobs = &bytes[12 + hlen..];
        let mut params = ParamStore::new();
        for entry in header.tensors {
            let numel: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let raw = blobs
                .get(start..start + 4 * numel)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{}` out of bounds", entry.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params
                .insert(entry.name, Tensor::new(entry.shape, data)?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(Checkpoint {
            vocab_fingerprint: header.vocab_fingerprint,
            config: header.config,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized form.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}
