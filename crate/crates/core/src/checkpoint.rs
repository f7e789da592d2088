//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CCGN" | u32 version | u32 len | config text (UTF-8)
//! then per tensor, until end of file:
//! u32 name len | name | u8 dtype | u32 rank | u64 extents... | raw values
//! ```
//!
//! Run state that is not configuration (iteration, generator position) lives
//! in a `[checkpoint]` section of the config text.

use std::fs;
use std::path::Path;

use ccgan_autograd::{DType, Scalar, Tensor};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CCGN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    fn dtype(&self) -> DType {
        match self {
            StoredTensor::F32(_) => DType::F32,
            StoredTensor::F64(_) => DType::F64,
        }
    }

    fn shape(&self) -> &[usize] {
        match self {
            StoredTensor::F32(t) => t.shape(),
            StoredTensor::F64(t) => t.shape(),
        }
    }

    /// Value as `T`, converting between precisions when needed.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        match self {
            StoredTensor::F32(t) => t.cast(),
            StoredTensor::F64(t) => t.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config_text: String,
    pub tensors: Vec<(String, StoredTensor)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::CheckpointPayload(format!(
                "truncated while reading {what} at byte {}",
                self.at
            ))
        })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("eight bytes")))
    }

    fn done(&self) -> bool {
        self.at == self.bytes.len()
    }
}

fn read_values<T: Scalar>(raw: &[u8], decode: fn(&[u8]) -> T) -> Vec<T> {
    raw.chunks_exact(T::DTYPE.size()).map(decode).collect()
}

impl Checkpoint {
    pub fn new(config_text: impl Into<String>) -> Self {
        Self {
            config_text: config_text.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push_f32(&mut self, name: impl Into<String>, t: Tensor<f32>) {
        self.tensors.push((name.into(), StoredTensor::F32(t)));
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Option<Tensor<T>> {
        self.get(name).map(StoredTensor::to_tensor)
    }

    /// Value of `key` in the `[checkpoint]` section of the config text.
    pub fn state_value(&self, key: &str) -> Option<&str> {
        let mut in_section = false;
        for line in self.config_text.lines() {
            let line = line.trim();
            if line.starts_with('[') {
                in_section = line == "[checkpoint]";
            } else if in_section {
                if let Some((k, v)) = line.split_once('=') {
                    if k.trim() == key {
                        return Some(v.trim());
                    }
                }
            }
        }
        None
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype().tag());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            match t {
                StoredTensor::F32(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                StoredTensor::F64(t) => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::CheckpointHeader(format!(
                "file is {} bytes, too short for a header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::CheckpointHeader("missing CCGN magic".into()));
        }
        let mut r = Reader { bytes, at: 4 };
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        let len = r.u32("config length")? as usize;
        let config_text = std::str::from_utf8(r.take(len, "config text")?)
            .map_err(|_| Error::CheckpointHeader("config text is not UTF-8".into()))?
            .to_string();
        let mut tensors = Vec::new();
        while !r.done() {
            let len = r.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|_| Error::CheckpointPayload("tensor name is not UTF-8".into()))?
                .to_string();
            let tag = r.take(1, "dtype")?[0];
            let dtype = DType::from_tag(tag).ok_or_else(|| {
                Error::CheckpointPayload(format!("unknown dtype tag {tag} for `{name}`"))
            })?;
            let rank = r.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u64("extent")? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .and_then(|n| n.checked_mul(dtype.size()))
                .ok_or_else(|| Error::CheckpointPayload(format!("absurd shape for `{name}`")))?;
            let raw = r.take(count, &format!("values of `{name}`"))?;
            let tensor = match dtype {
                DType::F32 => StoredTensor::F32(Tensor::new(
                    &shape,
                    read_values(raw, |b| f32::from_le_bytes(b.try_into().expect("4 bytes"))),
                )?),
                DType::F64 => StoredTensor::F64(Tensor::new(
                    &shape,
                    read_values(raw, |b| f64::from_le_bytes(b.try_into().expect("8 bytes"))),
                )?),
            };
            tensors.push((name, tensor));
        }
        Ok(Self {
            config_text,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
