//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "HFURCKPT"
//! version  u32      1
//! count    u64      number of records
//! record * count:
//!   name_len u64, name (UTF-8, name_len bytes)
//!   rank     u64
//!   extents  u64 * rank
//!   values   f64 * product(extents), IEEE-754 binary64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HFURCKPT";
pub const VERSION: u32 = 1;

/// Named tensors in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Checkpoint {
            tensors: store
                .iter()
                .map(|(n, t)| {
                    let plain = Tensor::new(t.shape().to_vec(), t.data().to_vec()).unwrap();
                    (n.to_string(), plain)
                })
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u64).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, origin };
        if r.take(8)? != MAGIC {
            return Err(Error::format(origin, "not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(origin, format!("unsupported version {version}")));
        }
        let count = r.u64()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.u64()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format(origin, "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u64()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(
                numel.checked_mul(8).ok_or_else(|| Error::format(origin, format!("tensor {name} is too large")))?,
            )?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(origin, format!("{} trailing bytes after last record", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    pub fn into_store(self) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, t) in self.tensors {
            store.add(name, t);
        }
        store
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(self.origin, format!("truncated: needed {n} bytes at offset {}", self.pos))),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
