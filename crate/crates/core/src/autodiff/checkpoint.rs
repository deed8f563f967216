//! Flat binary parameter container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "TGF1"            4 bytes magic
//! version           u32 (currently 1)
//! repeated until EOF:
//!   name_len        u32
//!   name            name_len bytes, UTF-8
//!   rank            u32
//!   dims            rank x u64
//!   payload         product(dims) x f64
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::params::ParamSet;
use super::Tensor;

pub const MAGIC: &[u8; 4] = b"TGF1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io error at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint record `{0}`")]
    Truncated(String),
    #[error("checkpoint record name is not UTF-8")]
    BadName,
    #[error("duplicate checkpoint record `{0}`")]
    Duplicate(String),
}

pub fn encode(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + params.scalar_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Truncated(what.to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamSet, CheckpointError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "header").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.u32("header")?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut params = ParamSet::new();
    while cur.pos < bytes.len() {
        let len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?).map_err(|_| CheckpointError::BadName)?.to_string();
        let rank = cur.u32(&name)? as usize;
        let shape = (0..rank).map(|_| cur.u64(&name).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let count = shape
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| CheckpointError::Truncated(name.clone()))?;
        let payload = cur.take(count.checked_mul(8).ok_or_else(|| CheckpointError::Truncated(name.clone()))?, &name)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let tensor = Tensor::new(shape, data).map_err(|_| CheckpointError::Truncated(name.clone()))?;
        if params.insert(name.clone(), tensor).is_some() {
            return Err(CheckpointError::Duplicate(name));
        }
    }
    Ok(params)
}

pub fn write_to(params: &ParamSet, mut w: impl Write) -> io::Result<()> {
    w.write_all(&encode(params))
}

pub fn read_from(mut r: impl Read) -> Result<ParamSet, CheckpointError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|source| CheckpointError::Io { path: "<reader>".into(), source })?;
    decode(&buf)
}

pub fn save(params: &ParamSet, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode(params)).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn load(path: &Path) -> Result<ParamSet, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    decode(&bytes)
}
