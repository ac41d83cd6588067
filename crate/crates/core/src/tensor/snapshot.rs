//! Versioned JSON snapshots of named tensors.
//!
//! ```json
//! {"format": "contab-snapshot", "version": 1, "meta": {...},
//!  "tensors": [{"name": "...", "rows": 2, "cols": 3, "values": [...]}]}
//! ```
//!
//! Values are written with shortest round-trip formatting, so a load restores
//! every bit.

use super::Tensor;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SNAPSHOT_FORMAT: &str = "contab-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, t: &Tensor) -> Self {
        NamedTensor {
            name: name.into(),
            rows: t.rows(),
            cols: t.cols(),
            values: t.as_slice().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_vec(self.rows, self.cols, self.values.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Snapshot {
    pub fn new(meta: serde_json::Value, tensors: Vec<NamedTensor>) -> Self {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            meta,
            tensors,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(s)?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::invalid(format!("not a parameter snapshot: format `{}`", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::invalid(format!("unsupported snapshot version {}", snap.version)));
        }
        for t in &snap.tensors {
            if t.values.len() != t.rows * t.cols {
                return Err(Error::shape("snapshot", format!("tensor `{}` header disagrees with data", t.name)));
            }
        }
        Ok(snap)
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
