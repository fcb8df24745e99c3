//! Binary tensor format shared by checkpoints, dataset splits and distilled
//! videos.
//!
//! ```text
//! "TSGF" | version: u32 | rank: u32 | extents: u32 * rank | dtype: u32 | data
//! ```
//!
//! All integers and elements are little-endian; `data` holds
//! `product(extents)` elements of the type named by the dtype tag.

use std::fs;
use std::path::Path;

use super::{numel, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TSGF";
pub const VERSION: u32 = 1;
/// dtype tag for IEEE-754 binary64 elements, the only element type in use.
pub const DTYPE_F64: u32 = 1;

pub fn encode(shape: &[usize], data: &[f64]) -> Vec<u8> {
    assert_eq!(numel(shape), data.len(), "encode: shape/data length mismatch");
    let mut out = Vec::with_capacity(16 + 4 * shape.len() + 8 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F64.to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Cursor over an encoded buffer; `origin` is only used in error messages.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], origin: &'a Path) -> Self {
        Reader { buf, pos: 0, origin }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::format(self.origin, format!("truncated: need {n} bytes at offset {}", self.pos)));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn tensor(&mut self) -> Result<(Vec<usize>, Vec<f64>)> {
        if self.take(4)? != MAGIC {
            return Err(Error::format(self.origin, "bad magic, expected \"TSGF\""));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(Error::Version { found: version, expected: VERSION });
        }
        let rank = self.u32()? as usize;
        if rank > 16 {
            return Err(Error::format(self.origin, format!("implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let dtype = self.u32()?;
        if dtype != DTYPE_F64 {
            return Err(Error::format(self.origin, format!("unsupported dtype tag {dtype}")));
        }
        let n = numel(&shape);
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.origin, "element count overflow"))?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((shape, data))
    }
}

/// Decodes exactly one tensor; trailing bytes are an error.
pub fn decode(buf: &[u8], origin: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = Reader::new(buf, origin);
    let t = r.tensor()?;
    if r.remaining() != 0 {
        return Err(Error::format(origin, format!("{} trailing bytes after tensor", r.remaining())));
    }
    Ok(t)
}

pub fn save(path: &Path, tensor: &Tensor) -> Result<()> {
    fs::write(path, encode(tensor.shape(), tensor.data())).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Tensor> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (shape, data) = decode(&buf, path)?;
    Tensor::new(shape, data)
}
