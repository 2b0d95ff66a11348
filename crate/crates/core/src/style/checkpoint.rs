//! Versioned checkpoint container.
//!
//! Layout: the 8-byte magic `SEGSTYCK`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then every tensor as little-endian `f32` values at
//! the byte offsets (relative to the end of the header) the header lists.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::LossWeights;
use super::profile::ArchProfile;
use super::weights::StyleNetWeights;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const MAGIC: &[u8; 8] = b"SEGSTYCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub profile: ArchProfile,
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes(w: &StyleNetWeights, metadata: &BTreeMap<String, String>) -> Vec<u8> {
    let mut entries = Vec::with_capacity(w.tensors().len());
    let mut data = Vec::new();
    for (name, t) in w.tensors() {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: data.len() as u64,
        });
        for v in t.data() {
            data.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        profile: w.profile().clone(),
        loss_weights: w.loss_weights(),
        metadata: metadata.clone(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    out
}

/// Parses only the header, checking magic and version.
pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(
            "not a segstyle checkpoint (bad magic bytes)".into(),
        ));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|e| *e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("truncated checkpoint header".into()))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[16..end])
        .map_err(|e| Error::Checkpoint(format!("unreadable checkpoint header: {e}")))?;
    let version = raw.get("version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        let found = version.map_or_else(|| "none".to_string(), |v| v.to_string());
        return Err(Error::Checkpoint(format!(
            "checkpoint format version {found}, this build reads version {FORMAT_VERSION}"
        )));
    }
    let header: CheckpointHeader = serde_json::from_value(raw).map_err(|e| {
        Error::Checkpoint(format!(
            "invalid checkpoint header (version {FORMAT_VERSION}): {e}"
        ))
    })?;
    Ok((header, end))
}

pub fn from_bytes(bytes: &[u8]) -> Result<(StyleNetWeights, BTreeMap<String, String>)> {
    let (header, data_start) = read_header(bytes)?;
    let data = &bytes[data_start..];
    let mut tensors = BTreeMap::new();
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start
            .checked_add(n * 4)
            .filter(|end| *end <= data.len())
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{}` runs past end of file", e.name)))?;
        let values = data[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        if tensors
            .insert(e.name.clone(), Tensor::new(e.shape.clone(), values))
            .is_some()
        {
            return Err(Error::Checkpoint(format!("duplicate tensor `{}`", e.name)));
        }
    }
    let w = StyleNetWeights::from_tensors(header.profile, header.loss_weights, tensors)?;
    Ok((w, header.metadata))
}

pub fn save(w: &StyleNetWeights, metadata: &BTreeMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(w, metadata)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(StyleNetWeights, BTreeMap<String, String>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}
