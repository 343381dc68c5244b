//! Binary model container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "CDFN" | u32 version | u32 tensor count
//! per tensor: u32 name length | name (UTF-8) | u32 ndim | ndim x u64 dims | f64 payload
//! u64 config length | config text (UTF-8)
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CDFN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub data: ArrayD<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub tensors: Vec<NamedTensor>,
    pub config: String,
}

impl Container {
    pub fn new(config: impl Into<String>) -> Self {
        Self {
            tensors: Vec::new(),
            config: config.into(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, data: ArrayD<f64>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            data,
        });
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.push(name, ArrayD::from_elem(IxDyn(&[]), v));
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.data)
            .ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))
    }

    pub fn get2(&self, name: &str) -> Result<Array2<f64>> {
        self.get(name)?
            .clone()
            .into_dimensionality()
            .map_err(|_| Error::Format(format!("tensor {name:?} is not 2-D")))
    }

    pub fn get1(&self, name: &str) -> Result<Array1<f64>> {
        self.get(name)?
            .clone()
            .into_dimensionality()
            .map_err(|_| Error::Format(format!("tensor {name:?} is not 1-D")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let t = self.get(name)?;
        if t.ndim() != 0 {
            return Err(Error::Format(format!("tensor {name:?} is not a scalar")));
        }
        Ok(t.iter().next().copied().unwrap_or(0.0))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.data.ndim() as u32).to_le_bytes());
            for &d in t.data.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            // logical row-major order regardless of memory layout
            for v in t.data.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.config.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a model container".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {version} (expected {VERSION})"
            )));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let ndim = r.u32()? as usize;
            let dims = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor size overflows".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let data = ArrayD::from_shape_vec(IxDyn(&dims), values)
                .map_err(|e| Error::Format(e.to_string()))?;
            tensors.push(NamedTensor { name, data });
        }
        let len = r.u64()? as usize;
        let config = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { tensors, config })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
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
            .ok_or_else(|| Error::Format(format!("truncated container at byte {}", self.pos)))?;
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
