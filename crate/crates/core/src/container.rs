//! `.pdon` tensor container.
//!
//! ```text
//! b"PDON" | u32 LE version | u64 LE manifest length | JSON manifest | payload
//! ```
//!
//! The manifest is `{"arrays": [{"name", "dtype", "shape", "byte_offset"}], "meta": {...}}`.
//! Arrays are little-endian `f64`, stored back to back in manifest order; `byte_offset`
//! is relative to the start of the payload.

use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PDON";
pub const VERSION: u32 = 1;
pub const DTYPE: &str = "f64";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_array2(a: &Array2<f64>) -> Self {
        Self {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> ArrayD<f64> {
        ArrayD::from_shape_vec(IxDyn(&self.shape), self.data.clone())
            .expect("shape checked on construction")
    }

    pub fn to_array2(&self) -> Result<Array2<f64>> {
        match self.shape.as_slice() {
            [r, c] => Ok(Array2::from_shape_vec((*r, *c), self.data.clone())
                .expect("shape checked on construction")),
            other => Err(Error::Shape(format!(
                "expected a matrix, got shape {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    byte_offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    arrays: Vec<ArrayEntry>,
    #[serde(default)]
    meta: Map<String, Value>,
}

/// Named `f64` tensors plus free-form JSON metadata, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    arrays: Vec<(String, Tensor)>,
    pub meta: Map<String, Value>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate array name {name:?}")));
        }
        self.arrays.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("container has no array {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let arrays = self
            .arrays
            .iter()
            .map(|(name, t)| {
                let entry = ArrayEntry {
                    name: name.clone(),
                    dtype: DTYPE.to_string(),
                    shape: t.shape.clone(),
                    byte_offset: offset,
                };
                offset += 8 * t.data.len() as u64;
                entry
            })
            .collect();
        let manifest = serde_json::to_vec(&Manifest {
            arrays,
            meta: self.meta.clone(),
        })?;
        let mut out = Vec::with_capacity(16 + manifest.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, t) in &self.arrays {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses and validates a container; the manifest is checked before any payload is read.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic, not a PDON container".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version}"
            )));
        }
        let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let body = &bytes[16..];
        if manifest_len > body.len() as u64 {
            return Err(Error::Format(format!(
                "manifest length {manifest_len} exceeds the {} remaining bytes",
                body.len()
            )));
        }
        let (manifest_bytes, payload) = body.split_at(manifest_len as usize);
        let manifest: Manifest = serde_json::from_slice(manifest_bytes)
            .map_err(|e| Error::Format(format!("invalid manifest: {e}")))?;

        let mut expected_offset = 0u64;
        for entry in &manifest.arrays {
            if entry.dtype != DTYPE {
                return Err(Error::Format(format!(
                    "array {:?} has dtype {:?}; only little-endian {DTYPE} is supported",
                    entry.name, entry.dtype
                )));
            }
            if entry.byte_offset != expected_offset {
                return Err(Error::Format(format!(
                    "array {:?} starts at byte {} but the previous array ends at {expected_offset}",
                    entry.name, entry.byte_offset
                )));
            }
            let count = entry
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .and_then(|c| c.checked_mul(8))
                .ok_or_else(|| Error::Format(format!("array {:?} is too large", entry.name)))?;
            expected_offset += count;
        }
        if payload.len() as u64 != expected_offset {
            return Err(Error::Format(format!(
                "payload holds {} bytes, manifest describes {expected_offset}",
                payload.len()
            )));
        }

        let mut container = Container {
            arrays: Vec::with_capacity(manifest.arrays.len()),
            meta: manifest.meta,
        };
        for entry in manifest.arrays {
            let start = entry.byte_offset as usize;
            let count: usize = entry.shape.iter().product();
            let data = payload[start..start + 8 * count]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            container.insert(entry.name, Tensor::new(entry.shape, data)?)?;
        }
        Ok(container)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
