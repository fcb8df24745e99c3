//! Single-file model checkpoints.
//!
//! ```text
//! "TSGFCKPT" | version: u32 | manifest_len: u32 | manifest (JSON)
//!   | count: u32 | { name_len: u32 | name | tensor }*count | sha256: [u8; 32]
//! ```
//!
//! Tensors use the format of [`crate::tensor::io`]. The trailing SHA-256
//! covers every preceding byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Architecture, BnState, Model, Param};
use crate::error::{Error, Result};
use crate::tensor::io::{encode, Reader};

pub const MAGIC: &[u8; 8] = b"TSGFCKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    architecture: Architecture,
    batch_norm: Vec<BnMeta>,
}

#[derive(Serialize, Deserialize)]
struct BnMeta {
    name: String,
    momentum: f64,
    eps: f64,
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let manifest = Manifest {
        architecture: model.architecture().clone(),
        batch_norm: model
            .bn_layers()
            .iter()
            .map(|b| BnMeta { name: b.name.clone(), momentum: b.momentum, eps: b.eps })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");

    let mut named: Vec<(String, Vec<usize>, &[f64])> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.shape.clone(), p.value.as_slice()))
        .collect();
    for b in model.bn_layers() {
        named.push((format!("{}.running_mean", b.name), vec![b.channels()], &b.running_mean));
        named.push((format!("{}.running_var", b.name), vec![b.channels()], &b.running_var));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, shape, data) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&encode(&shape, data));
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn from_bytes(buf: &[u8], origin: &Path) -> Result<Model> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::format(origin, "not a checkpoint: bad magic, expected \"TSGFCKPT\""));
    }
    let mut r = Reader::new(buf, origin);
    r.take(MAGIC.len())?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    if buf.len() < 32 + 16 {
        return Err(Error::format(origin, "truncated checkpoint"));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity { path: origin.to_path_buf(), detail: "checkpoint checksum mismatch (corrupted file)".into() });
    }

    let mut r = Reader::new(body, origin);
    r.take(MAGIC.len() + 4)?;
    let len = r.u32()? as usize;
    let manifest: Manifest = serde_json::from_slice(r.take(len)?).map_err(|e| Error::json(origin, e))?;
    let count = r.u32()? as usize;
    let mut tensors = std::collections::HashMap::with_capacity(count);
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::format(origin, "tensor name is not utf-8"))?;
        let t = r.tensor()?;
        tensors.insert(name, t);
    }
    if r.remaining() != 0 {
        return Err(Error::format(origin, "trailing bytes after tensors"));
    }

    // Rebuild the skeleton so names and shapes are checked against the
    // architecture rather than trusted from the file.
    let skeleton = Model::new(manifest.architecture.clone(), 0)?;
    let mut take = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        let (s, d) = tensors
            .remove(name)
            .ok_or_else(|| Error::format(origin, format!("missing tensor {name:?}")))?;
        if s != shape {
            return Err(Error::format(origin, format!("tensor {name:?} has shape {s:?}, expected {shape:?}")));
        }
        Ok(d)
    };
    let params = skeleton
        .params()
        .iter()
        .map(|p| Ok(Param { name: p.name.clone(), shape: p.shape.clone(), value: take(&p.name, &p.shape)? }))
        .collect::<Result<Vec<_>>>()?;
    if manifest.batch_norm.len() != skeleton.bn_layers().len() {
        return Err(Error::format(origin, "batch-norm layer count disagrees with architecture"));
    }
    let bn = skeleton
        .bn_layers()
        .iter()
        .zip(&manifest.batch_norm)
        .map(|(b, meta)| {
            if meta.name != b.name {
                return Err(Error::format(origin, format!("unexpected batch-norm layer {:?}", meta.name)));
            }
            let c = [b.channels()];
            let running_var = take(&format!("{}.running_var", b.name), &c)?;
            if running_var.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::format(origin, format!("{}: running variance must be positive", b.name)));
            }
            Ok(BnState {
                name: b.name.clone(),
                running_mean: take(&format!("{}.running_mean", b.name), &c)?,
                running_var,
                momentum: meta.momentum,
                eps: meta.eps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::format(origin, format!("unexpected tensor {extra:?}")));
    }
    Ok(Model::from_parts(manifest.architecture, params, bn))
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf, path)
}

/// Hex SHA-256 of a file's bytes; identifies the teacher a distilled set was
/// produced against.
pub fn file_hash(path: &Path) -> Result<String> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex_digest(&buf))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
