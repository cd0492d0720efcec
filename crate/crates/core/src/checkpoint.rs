//! `SMORLCK1` binary container for named parameter matrices.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"SMORLCK1"
//! u64 metadata length, metadata bytes (UTF-8 JSON)
//! u32 tensor count
//! per tensor: u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, SmorlError};
use crate::numerics::DenseMatrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SMORLCK1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, DenseMatrix)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Checkpoint {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: DenseMatrix) {
        self.tensors.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Result<&DenseMatrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| SmorlError::Format(format!("checkpoint has no tensor {name:?}")))
    }

    pub fn take(&mut self, name: &str) -> Result<DenseMatrix> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| SmorlError::Format(format!("checkpoint has no tensor {name:?}")))?;
        Ok(self.tensors.swap_remove(pos).1)
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.meta.get(key).and_then(|v| v.as_str())
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.meta
            .get(key)
            .and_then(|v| v.as_u64())
            .ok_or_else(|| SmorlError::Format(format!("checkpoint metadata missing integer {key:?}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("JSON value serializes");
        let payload: usize = self.tensors.iter().map(|(n, m)| 20 + n.len() + 8 * m.len()).sum();
        let mut out = Vec::with_capacity(8 + 8 + meta.len() + 4 + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            for v in m.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(SmorlError::Format("not a SMORLCK1 checkpoint".into()));
        }
        let meta_len = r.u64()? as usize;
        let meta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| SmorlError::Format(format!("checkpoint metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| SmorlError::Format("checkpoint tensor name is not UTF-8".into()))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|l| l.checked_mul(8))
                .ok_or_else(|| SmorlError::Format(format!("tensor {name:?} shape overflows")))?;
            let raw = r.take(len)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((name, DenseMatrix::from_vec(rows, cols, values)?));
        }
        if r.pos != bytes.len() {
            return Err(SmorlError::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| SmorlError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| SmorlError::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| SmorlError::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| SmorlError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
