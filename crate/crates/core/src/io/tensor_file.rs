//! SGC1 tensor files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SGC1"
//! 4       4     height      (u32 LE)
//! 8       4     width       (u32 LE)
//! 12      4     channels    (u32 LE)
//! 16      4     precision   (u32 LE, 0 = f32, 1 = f64)
//! 20      ...   elements, little-endian, row-major, channel innermost
//! ```
//!
//! Kernels are stored as `kh × kw × (cin·cout)` tensors, which is the
//! kernel's own memory layout; the reader supplies `cin` to split the last
//! axis.

use std::fs;
use std::path::Path;

use crate::error::{contract, Error, Result};
use crate::tensor::{Element, Kernel, Precision, Tensor};

pub const MAGIC: &[u8; 4] = b"SGC1";
const HEADER_LEN: usize = 20;

/// A tensor read from disk in whichever precision the file declared.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    Single(Tensor<f32>),
    Double(Tensor<f64>),
}

impl AnyTensor {
    pub fn precision(&self) -> Precision {
        match self {
            AnyTensor::Single(_) => Precision::Single,
            AnyTensor::Double(_) => Precision::Double,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            AnyTensor::Single(t) => t.dims(),
            AnyTensor::Double(t) => t.dims(),
        }
    }

    pub fn to_precision<T: Element>(&self) -> Tensor<T> {
        match self {
            AnyTensor::Single(t) => t.cast(),
            AnyTensor::Double(t) => t.cast(),
        }
    }
}

pub fn write_tensor<T: Element>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + t.bytes());
    out.extend_from_slice(MAGIC);
    for field in [t.height(), t.width(), t.channels()] {
        out.extend_from_slice(&(field as u32).to_le_bytes());
    }
    out.extend_from_slice(&T::PRECISION.code().to_le_bytes());
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            msg: format!("header truncated, expected {HEADER_LEN} bytes"),
        })
}

fn decode<T: Element>(h: usize, w: usize, c: usize, payload: &[u8]) -> Result<Tensor<T>> {
    let size = T::PRECISION.bytes();
    let data = payload.chunks_exact(size).map(T::read_le).collect();
    Tensor::new(h, w, c, data)
}

pub fn read_tensor(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: "missing SGC1 magic".into(),
        });
    }
    let h = u32_at(bytes, 4)? as usize;
    let w = u32_at(bytes, 8)? as usize;
    let c = u32_at(bytes, 12)? as usize;
    let code = u32_at(bytes, 16)?;
    let precision = Precision::from_code(code).ok_or_else(|| Error::Parse {
        offset: 16,
        msg: format!("unknown precision code {code}"),
    })?;
    let expected = h * w * c * precision.bytes();
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Parse {
            offset: HEADER_LEN + payload.len().min(expected),
            msg: format!(
                "expected {expected} bytes of element data, found {}",
                payload.len()
            ),
        });
    }
    Ok(match precision {
        Precision::Single => AnyTensor::Single(decode(h, w, c, payload)?),
        Precision::Double => AnyTensor::Double(decode(h, w, c, payload)?),
    })
}

pub fn write_tensor_file<T: Element>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    fs::write(path, write_tensor(t))?;
    Ok(())
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<AnyTensor> {
    read_tensor(&fs::read(path)?)
}

/// Interprets a `kh × kw × (cin·cout)` tensor as a kernel.
pub fn kernel_from_tensor<T: Element>(t: &Tensor<T>, cin: usize) -> Result<Kernel<T>> {
    if cin == 0 || !t.channels().is_multiple_of(cin) {
        return Err(contract(format!(
            "kernel file has {} channels, not a multiple of {cin} input channels",
            t.channels()
        )));
    }
    Kernel::new(
        t.height(),
        t.width(),
        cin,
        t.channels() / cin,
        t.data().to_vec(),
    )
}

pub fn kernel_to_tensor<T: Element>(k: &Kernel<T>) -> Tensor<T> {
    Tensor::from_parts(k.kh(), k.kw(), k.cin() * k.cout(), k.data().to_vec())
}
