//! KTNSR tensor container.
//!
//! Little-endian layout:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `KTSR`                   |
//! | 4      | 1    | version, always 1              |
//! | 5      | 1    | dtype: 1 = f32, 2 = f64        |
//! | 6      | 1    | ndim, always 4                 |
//! | 7      | 1    | reserved, 0                    |
//! | 8      | 16   | dims `o, i, k_h, k_w` as u32   |
//! | 24     | ..   | payload, row-major             |
//!
//! f32 payloads are widened to f64 on load.

use std::fs;
use std::path::Path;

use super::{checked_numel, KernelTensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"KTSR";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Encodes `t`. With [`Dtype::F32`] values are narrowed with `as f32`.
pub fn save_tensor(t: &KernelTensor, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + t.data.len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, dtype.code(), 4, 0]);
    for &d in &t.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::Size(format!("dimension {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match dtype {
        Dtype::F32 => t
            .data
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => t
            .data
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

/// Decodes a container. The returned tensor has an empty name.
pub fn load_tensor(bytes: &[u8]) -> Result<KernelTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            what: "header",
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if bytes[4] != VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    let dtype = Dtype::from_code(bytes[5])?;
    if bytes[6] != 4 {
        return Err(Error::UnsupportedRank(bytes[6]));
    }

    let mut dims = [0usize; 4];
    for (k, chunk) in bytes[8..HEADER_LEN].chunks_exact(4).enumerate() {
        dims[k] = u32::from_le_bytes(chunk.try_into().unwrap()) as usize;
    }
    if dims.contains(&0) {
        return Err(Error::Shape(format!("zero dimension in {dims:?}")));
    }
    let numel = checked_numel(&dims)?;
    let expected = numel
        .checked_mul(dtype.width())
        .ok_or_else(|| Error::Size(format!("payload for {dims:?} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            what: "payload",
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::PayloadMismatch {
            expected,
            found: payload.len(),
        });
    }

    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    KernelTensor::new(String::new(), dims, data)
}

/// Reads a container from disk, naming the tensor after the file stem.
pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<KernelTensor> {
    let path = path.as_ref();
    let mut t = load_tensor(&fs::read(path)?)?;
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        t.set_name(stem);
    }
    Ok(t)
}

pub fn write_tensor_file(path: impl AsRef<Path>, t: &KernelTensor, dtype: Dtype) -> Result<()> {
    fs::write(path, save_tensor(t, dtype)?)?;
    Ok(())
}
