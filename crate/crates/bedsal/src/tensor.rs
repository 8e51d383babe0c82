//! `BSTN` tensor files.
//!
//! Layout, all little-endian: magic `BSTN`, version `u8`, rank `u8`, `rank`
//! dims as `u32`, dtype tag `u8` (0 = f32, 1 = f64), then the row-major
//! payload.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 4] = b"BSTN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("not a tensor file (bad magic)")]
    BadMagic,
    #[error("unsupported tensor version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown dtype tag {0}")]
    BadDtype(u8),
    #[error("dims {dims:?} hold {expected} values, got {found}")]
    DimMismatch {
        dims: Vec<u32>,
        expected: u64,
        found: usize,
    },
    #[error("rank {0} exceeds 255")]
    RankTooLarge(usize),
    #[error("truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: usize },
    #[error("{0} unexpected bytes after the payload")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(dims: Vec<u32>, values: Vec<f32>) -> Self {
        Tensor {
            dims,
            data: TensorData::F32(values),
        }
    }

    pub fn f64(dims: Vec<u32>, values: Vec<f64>) -> Self {
        Tensor {
            dims,
            data: TensorData::F64(values),
        }
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn dims_usize(&self) -> Vec<usize> {
        self.dims.iter().map(|&d| d as usize).collect()
    }

    pub fn encode(&self) -> Result<Vec<u8>, TensorError> {
        let expected = element_count(&self.dims);
        if expected != self.len() as u64 {
            return Err(TensorError::DimMismatch {
                dims: self.dims.clone(),
                expected,
                found: self.len(),
            });
        }
        if self.dims.len() > u8::MAX as usize {
            return Err(TensorError::RankTooLarge(self.dims.len()));
        }
        let mut out = Vec::with_capacity(7 + 4 * self.dims.len() + self.len() * self.dtype().size());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(self.dtype() as u8);
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Tensor, TensorError> {
        let truncated = |expected: u64| TensorError::TruncatedPayload {
            expected,
            found: bytes.len(),
        };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(TensorError::BadMagic);
        }
        let version = *bytes.get(4).ok_or(truncated(6))?;
        if version != VERSION {
            return Err(TensorError::UnsupportedVersion(version));
        }
        let rank = *bytes.get(5).ok_or(truncated(6))? as usize;
        let header = 6 + 4 * rank + 1;
        if bytes.len() < header {
            return Err(truncated(header as u64));
        }
        let dims: Vec<u32> = bytes[6..6 + 4 * rank]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let dtype = match bytes[header - 1] {
            0 => Dtype::F32,
            1 => Dtype::F64,
            t => return Err(TensorError::BadDtype(t)),
        };
        let count = element_count(&dims);
        let expected = header as u64 + count * dtype.size() as u64;
        if (bytes.len() as u64) < expected {
            return Err(truncated(expected));
        }
        if bytes.len() as u64 > expected {
            return Err(TensorError::TrailingBytes(bytes.len() - expected as usize));
        }
        let payload = &bytes[header..];
        let data = match dtype {
            Dtype::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Tensor { dims, data })
    }
}

fn element_count(dims: &[u32]) -> u64 {
    dims.iter().map(|&d| d as u64).product()
}

pub fn dims_u32(dims: &[usize]) -> Vec<u32> {
    dims.iter().map(|&d| d as u32).collect()
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    let bytes = tensor.encode().map_err(|source| Error::Tensor {
        path: path.to_owned(),
        source,
    })?;
    fs::write(path, bytes).at(path)
}

/// Writes `values` as an f32 tensor.
pub fn write_f32(path: &Path, dims: &[usize], values: &[f32]) -> Result<()> {
    write_tensor(path, &Tensor::f32(dims_u32(dims), values.to_vec()))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).at(path)?;
    Tensor::decode(&bytes).map_err(|source| Error::Tensor {
        path: path.to_owned(),
        source,
    })
}
