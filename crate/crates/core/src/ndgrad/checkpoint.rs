//! Versioned binary parameter container.
//!
//! Layout: 8-byte magic `NDGRADCK`, `u32` format version, `u64` header
//! length, UTF-8 JSON header, then every tensor's values as little-endian
//! `f64` in header order. All integers are little-endian.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tensor::Parameterized;
use crate::error::{Result, TcsError};

pub const MAGIC: &[u8; 8] = b"NDGRADCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub tensors: Vec<TensorEntry>,
    /// Free-form provenance: seeds, hyperparameters, crate version.
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<f64>,
}

fn bad(msg: impl Into<String>) -> TcsError {
    TcsError::Data(format!("checkpoint: {}", msg.into()))
}

fn io_err(e: std::io::Error) -> TcsError {
    bad(e.to_string())
}

impl Checkpoint {
    pub fn capture(model: &dyn Parameterized, meta: serde_json::Value) -> Self {
        let tensors = model
            .layout()
            .into_iter()
            .map(|(name, shape)| TensorEntry { name, shape })
            .collect();
        Checkpoint {
            header: CheckpointHeader {
                format_version: FORMAT_VERSION,
                tensors,
                meta,
            },
            values: model.flat_values(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header).map_err(|e| bad(e.to_string()))?;
        w.write_all(MAGIC).map_err(io_err)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io_err)?;
        w.write_all(&header).map_err(io_err)?;
        let mut payload = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload).map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(io_err)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(io_err)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header).map_err(io_err)?;
        let header: CheckpointHeader = serde_json::from_slice(&header).map_err(|e| bad(e.to_string()))?;
        let count: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        let mut payload = vec![0u8; count * 8];
        r.read_exact(&mut payload).map_err(io_err)?;
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(io_err)?;
        if !rest.is_empty() {
            return Err(bad(format!("{} trailing bytes", rest.len())));
        }
        Ok(Checkpoint { header, values })
    }

    /// Copy the stored values into `model`, whose layout must match exactly.
    pub fn restore_into(&self, model: &mut dyn Parameterized) -> Result<()> {
        let layout = model.layout();
        if layout.len() != self.header.tensors.len() {
            return Err(TcsError::Structural(format!(
                "checkpoint holds {} tensors, model has {}",
                self.header.tensors.len(),
                layout.len()
            )));
        }
        for ((name, shape), entry) in layout.iter().zip(&self.header.tensors) {
            if *name != entry.name || *shape != entry.shape {
                return Err(TcsError::Structural(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {} {:?}",
                    entry.name, entry.shape, name, shape
                )));
            }
        }
        model.set_flat_values(&self.values)
    }
}
