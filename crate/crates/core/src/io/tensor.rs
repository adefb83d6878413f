//! `PFTB` tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size     field
//! 0       4        magic "PFTB"
//! 4       2        format version (1)
//! 6       1        dtype tag (0 = f32)
//! 7       1        rank
//! 8       4*rank   dims, u32 each
//! ..      4*prod   payload, f32, row-major
//! ```

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PFTB";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_tensor(dims: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    if count != Some(data.len()) {
        return Err(Error::DimensionMismatch(format!("tensor dims {dims:?} do not match {} values", data.len())));
    }
    if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::InvalidValue(format!("tensor dims {dims:?} not representable")));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("tensor value at index {i}")));
    }
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a tensor; `path` is only used to name the source in errors.
pub fn decode_tensor(path: &Path, bytes: &[u8]) -> Result<Tensor> {
    let truncated = |offset: usize, expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        offset: offset as u64,
        expected: expected as u64,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf(), offset: 0 });
    }
    if bytes.len() < 8 {
        return Err(truncated(4, 8));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            offset: 4,
            reason: format!("version {version}"),
        });
    }
    if bytes[6] != DTYPE_F32 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            offset: 6,
            reason: format!("dtype tag {}", bytes[6]),
        });
    }
    let rank = bytes[7] as usize;
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated(8, header));
    }
    let dims: Vec<usize> =
        bytes[8..header].chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize).collect();
    let payload =
        dims.iter().try_fold(4usize, |acc, &d| acc.checked_mul(d)).and_then(|p| p.checked_add(header)).ok_or_else(
            || Error::UnsupportedFormat {
                path: path.to_path_buf(),
                offset: 8,
                reason: format!("dims {dims:?} overflow"),
            },
        )?;
    if bytes.len() != payload {
        return Err(truncated(header, payload));
    }
    let mut data = Vec::with_capacity((payload - header) / 4);
    for (i, c) in bytes[header..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { path: path.to_path_buf(), offset: (header + 4 * i) as u64 });
        }
        data.push(v);
    }
    Ok(Tensor { dims, data })
}

pub fn write_tensor(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    super::write_atomic(path, &encode_tensor(dims, data)?)
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(path, &bytes)
}
