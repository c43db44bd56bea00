//! The QTNSR1 tensor container: a minimal little-endian binary format.
//!
//! Layout, all offsets in bytes:
//!
//! | offset      | field   | contents                              |
//! |-------------|---------|---------------------------------------|
//! | 0           | magic   | 6 ASCII bytes `QTNSR1`                |
//! | 6           | ndim    | u32 little-endian                     |
//! | 10          | dims    | ndim × u64 little-endian              |
//! | 10 + 8·ndim | dtype   | 1 byte, 0 = 32-bit little-endian float|
//! | 11 + 8·ndim | payload | row-major f32 elements                |
//!
//! Parse errors name the failing field and its byte offset.

use std::fs;
use std::path::Path;

use thiserror::Error;

use quant8_core::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"QTNSR1";
pub const DTYPE_F32LE: u8 = 0;

#[derive(Debug, Error)]
pub enum TensorFileError {
    #[error("{path}: bad magic at offset 0, expected \"QTNSR1\"")]
    Magic { path: String },
    #[error("{path}: truncated {field} at offset {offset}")]
    Truncated {
        path: String,
        field: &'static str,
        offset: usize,
    },
    #[error("{path}: unsupported dtype {dtype} at offset {offset} (0 = f32 little-endian)")]
    Dtype {
        path: String,
        dtype: u8,
        offset: usize,
    },
    #[error("{path}: payload at offset {offset} is {got} bytes, dims imply {expected}")]
    PayloadLength {
        path: String,
        offset: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}: non-finite element {index} in payload at offset {offset}")]
    NonFinite {
        path: String,
        index: usize,
        offset: usize,
    },
    #[error("{path}: dimension product overflows at offset {offset}")]
    DimOverflow { path: String, offset: usize },
    #[error("reading {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Read and validate a tensor file.
pub fn read_tensor(path: &Path) -> Result<Tensor, TensorFileError> {
    let name = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| TensorFileError::Io {
        path: name.clone(),
        source,
    })?;

    if bytes.len() < 6 || &bytes[..6] != MAGIC {
        return Err(TensorFileError::Magic { path: name });
    }
    let ndim = read_u32(&bytes, 6, "ndim", &name)? as usize;

    let mut dims = Vec::with_capacity(ndim);
    let mut count: usize = 1;
    for i in 0..ndim {
        let offset = 10 + 8 * i;
        let d = read_u64(&bytes, offset, "dims", &name)?;
        let d = usize::try_from(d)
            .ok()
            .ok_or(TensorFileError::DimOverflow {
                path: name.clone(),
                offset,
            })?;
        count = count.checked_mul(d).ok_or(TensorFileError::DimOverflow {
            path: name.clone(),
            offset,
        })?;
        dims.push(d);
    }

    let dtype_offset = 10 + 8 * ndim;
    let dtype = *bytes.get(dtype_offset).ok_or(TensorFileError::Truncated {
        path: name.clone(),
        field: "dtype",
        offset: dtype_offset,
    })?;
    if dtype != DTYPE_F32LE {
        return Err(TensorFileError::Dtype {
            path: name,
            dtype,
            offset: dtype_offset,
        });
    }

    let payload_offset = dtype_offset + 1;
    let payload = &bytes[payload_offset..];
    let expected = count.checked_mul(4).ok_or(TensorFileError::DimOverflow {
        path: name.clone(),
        offset: payload_offset,
    })?;
    if payload.len() != expected {
        return Err(TensorFileError::PayloadLength {
            path: name,
            offset: payload_offset,
            expected,
            got: payload.len(),
        });
    }

    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(TensorFileError::NonFinite {
                path: name,
                index: i,
                offset: payload_offset + 4 * i,
            });
        }
        data.push(v);
    }
    Ok(Tensor::new(dims, data).expect("length and finiteness validated"))
}

/// Write a tensor in the container layout.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<(), TensorFileError> {
    let name = path.display().to_string();
    let mut bytes = Vec::with_capacity(11 + 8 * t.shape().len() + 4 * t.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        bytes.extend_from_slice(&(d as u64).to_le_bytes());
    }
    bytes.push(DTYPE_F32LE);
    for &v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| TensorFileError::Io { path: name, source })
}

fn read_u32(
    bytes: &[u8],
    offset: usize,
    field: &'static str,
    path: &str,
) -> Result<u32, TensorFileError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(TensorFileError::Truncated {
            path: path.to_string(),
            field,
            offset,
        })
}

fn read_u64(
    bytes: &[u8],
    offset: usize,
    field: &'static str,
    path: &str,
) -> Result<u64, TensorFileError> {
    bytes
        .get(offset..offset + 8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .ok_or(TensorFileError::Truncated {
            path: path.to_string(),
            field,
            offset,
        })
}
