//! Binary checkpoint container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "SGNT" | version | entry count | entries...
//! entry: name length | UTF-8 name | rank | dims... | payload
//! ```
//!
//! Tensor payloads are raw little-endian `f32`. Entries whose name starts
//! with `meta/` are rank-1 and carry `dims[0]` bytes of UTF-8 text instead;
//! `meta/arch` holds the architecture as JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::arch::ArchitectureConfig;
use super::signet::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SGNT";
pub const FORMAT_VERSION: u32 = 1;
const META_PREFIX: &str = "meta/";
pub const ARCH_KEY: &str = "arch";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor<f32>)>,
    /// Text entries, keyed without the `meta/` prefix.
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Model<T>) -> Result<Self> {
        let mut meta = BTreeMap::new();
        meta.insert(ARCH_KEY.to_owned(), model.config().to_json()?);
        Ok(Checkpoint { tensors: model.params().iter().map(|(n, t)| (n.clone(), t.cast())).collect(), meta })
    }

    /// Rebuilds the model; tensors outside the architecture (such as
    /// optimizer state) are ignored.
    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>> {
        let arch = self.meta.get(ARCH_KEY).ok_or_else(|| Error::Checkpoint("no architecture entry".into()))?;
        let config = ArchitectureConfig::from_json(arch)?;
        let tensors = self.tensors.iter().map(|(n, t)| (n.clone(), t.cast())).collect();
        Model::from_parts(config, tensors)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, (self.tensors.len() + self.meta.len()) as u32);
        for (name, t) in &self.tensors {
            put_name(&mut out, name);
            put_u32(&mut out, t.rank() as u32);
            t.shape().iter().for_each(|&d| put_u32(&mut out, d as u32));
            t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        for (key, text) in &self.meta {
            put_name(&mut out, &format!("{META_PREFIX}{key}"));
            put_u32(&mut out, 1);
            put_u32(&mut out, text.len() as u32);
            out.extend_from_slice(text.as_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic bytes)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let count = r.u32()?;
        let mut ck = Checkpoint::default();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if let Some(key) = name.strip_prefix(META_PREFIX) {
                let [n] = dims[..] else {
                    return Err(Error::Checkpoint(format!("`{name}` must be rank 1")));
                };
                let text = String::from_utf8(r.take(n)?.to_vec())
                    .map_err(|_| Error::Checkpoint(format!("`{name}` is not UTF-8")))?;
                ck.meta.insert(key.to_owned(), text);
            } else {
                let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
                let bytes = numel
                    .and_then(|n| n.checked_mul(4))
                    .ok_or_else(|| Error::Checkpoint(format!("`{name}` has absurd dims {dims:?}")))?;
                let data = r
                    .take(bytes)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                    .collect();
                let t = Tensor::from_vec(dims, data).map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
                ck.tensors.push((name, t));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(ck)
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
