//! Versioned little-endian binary tables for policies and value functions.
//!
//! Layout: `b"EHTB"`, `u32` version, `u32` kind, `u32` horizon, `u32` rank,
//! `rank × u64` dims, then `horizon · Π dims` elements (u32 or f64).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EHTB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum TableKind {
    /// Joint action per global state (u32).
    JointActions = 1,
    /// Value per global state (f64).
    Values = 2,
    /// Action probabilities per localized state (f64).
    LocalPolicy = 3,
}

impl TableKind {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(TableKind::JointActions),
            2 => Some(TableKind::Values),
            3 => Some(TableKind::LocalPolicy),
            _ => None,
        }
    }

    fn is_integer(self) -> bool {
        self == TableKind::JointActions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    U32(Vec<u32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: TableKind,
    pub horizon: u32,
    pub dims: Vec<u64>,
    pub payload: Payload,
}

impl Table {
    fn expected_len(&self) -> Option<usize> {
        self.dims
            .iter()
            .try_fold(self.horizon as u64, |acc, &d| acc.checked_mul(d))
            .and_then(|n| usize::try_from(n).ok())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let len = match &self.payload {
            Payload::U32(v) => v.len(),
            Payload::F64(v) => v.len(),
        };
        if Some(len) != self.expected_len() {
            return Err(Error::ShapeMismatch(format!("payload has {len} elements, header disagrees")));
        }
        if self.kind.is_integer() != matches!(self.payload, Payload::U32(_)) {
            return Err(Error::arg("payload element type does not match table kind"));
        }
        let mut out = Vec::with_capacity(24 + 8 * self.dims.len() + 8 * len);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.kind as u32, self.horizon, self.dims.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.payload {
            Payload::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        };
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(bad("truncated file"));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32_at = || -> Result<u32> { Ok(u32::from_le_bytes(take(4)?.try_into().unwrap())) };
        let version = u32_at()?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let kind = TableKind::from_u32(u32_at()?).ok_or_else(|| bad("unknown table kind"))?;
        let horizon = u32_at()?;
        let rank = u32_at()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        let mut table = Table {
            kind,
            horizon,
            dims,
            payload: Payload::U32(Vec::new()),
        };
        let n = table.expected_len().ok_or_else(|| bad("dimensions overflow"))?;
        let width = if kind.is_integer() { 4 } else { 8 };
        let body = take(n.checked_mul(width).ok_or_else(|| bad("dimensions overflow"))?)?;
        table.payload = if kind.is_integer() {
            Payload::U32(body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
        } else {
            Payload::F64(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        if !cur.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}
