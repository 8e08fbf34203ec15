//! Binary tensor format.
//!
//! ```text
//! "SSTN" | version u16 | dtype u8 (0 = f32, 1 = f64) | rank u8 | extents u32 × rank | payload
//! ```
//! All integers and payload elements are little-endian; payload is row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Scalar, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"SSTN";
pub const TENSOR_VERSION: u16 = 1;

/// A decoded tensor of either element type.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::F64(t) => t.dims(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn into_scalar<S: Scalar>(self) -> Tensor<S> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode_tensor<S: Scalar>(t: &Tensor<S>, out: &mut Vec<u8>) -> Result<()> {
    if t.rank() > u8::MAX as usize {
        return Err(Error::Format(format!("rank {} exceeds 255", t.rank())));
    }
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(S::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.reserve(t.numel() * S::DTYPE.size());
    for &v in t.data() {
        v.write_le(out);
    }
    Ok(())
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < *pos + n {
        return Err(Error::Format(format!("truncated {what}")));
    }
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn decode_payload<S: Scalar>(bytes: &[u8], pos: &mut usize, dims: &[usize]) -> Result<Tensor<S>> {
    let n: usize = dims.iter().product();
    let raw = take(bytes, pos, n * S::DTYPE.size(), "payload")?;
    let data = raw.chunks_exact(S::DTYPE.size()).map(S::read_le).collect();
    Tensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))
}

/// Decodes one tensor record starting at `*pos`, advancing it.
pub fn decode_tensor(bytes: &[u8], pos: &mut usize) -> Result<AnyTensor> {
    let magic = take(bytes, pos, 4, "magic")?;
    if magic != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad tensor magic {magic:?}")));
    }
    let version = u16::from_le_bytes(take(bytes, pos, 2, "version")?.try_into().unwrap());
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let code = take(bytes, pos, 1, "dtype")?[0];
    let dtype = DType::from_code(code).ok_or_else(|| Error::Format(format!("unknown dtype code {code}")))?;
    let rank = take(bytes, pos, 1, "rank")?[0] as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u32::from_le_bytes(take(bytes, pos, 4, "extents")?.try_into().unwrap());
        dims.push(d as usize);
    }
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(decode_payload(bytes, pos, &dims)?),
        DType::F64 => AnyTensor::F64(decode_payload(bytes, pos, &dims)?),
    })
}

pub fn write_tensor<S: Scalar>(path: impl AsRef<Path>, t: &Tensor<S>) -> Result<()> {
    let mut buf = Vec::new();
    encode_tensor(t, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_tensor_any(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let t = decode_tensor(&bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(t)
}

/// Reads a tensor file, converting the element type if needed.
pub fn read_tensor<S: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<S>> {
    Ok(read_tensor_any(path)?.into_scalar())
}
