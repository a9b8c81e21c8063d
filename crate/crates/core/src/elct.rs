//! ELCT binary tensor encoding.
//!
//! Layout: magic `ELCT`, version `u8 = 1`, dtype `u8 = 0` (f32), `ndim: u8`,
//! one reserved zero byte, `ndim` little-endian `u32` dims, then the
//! row-major little-endian `f32` payload.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result, Tensor};

pub const MAGIC: [u8; 4] = *b"ELCT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;
const FIXED_HEADER: usize = 8;

pub fn encoded_len(shape: &[usize]) -> usize {
    FIXED_HEADER + 4 * shape.len() + 4 * shape.iter().product::<usize>()
}

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let ndim = u8::try_from(t.shape().len())
        .map_err(|_| Error::Format(format!("{} dimensions exceed 255", t.shape().len())))?;
    let mut out = Vec::with_capacity(encoded_len(t.shape()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_F32, ndim, 0]);
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < FIXED_HEADER {
        return Err(Error::Format(format!("truncated header ({} bytes)", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype {}", bytes[5])));
    }
    let ndim = bytes[6] as usize;
    if ndim == 0 {
        return Err(Error::Format("zero-dimensional tensor".into()));
    }
    let dims_end = FIXED_HEADER + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(Error::Format("truncated dimension list".into()));
    }
    let shape: Vec<usize> = bytes[FIXED_HEADER..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))?;
    let payload = &bytes[dims_end..];
    if payload.len() != 4 * n {
        return Err(Error::Format(format!(
            "payload is {} bytes, shape {shape:?} needs {}",
            payload.len(),
            4 * n
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data).map_err(|e| Error::Format(format!("{e}")))
}
