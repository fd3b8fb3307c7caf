//! `TSQ1` binary tensor files.
//!
//! Layout: magic `TSQ1`, `u32` rank, `rank × u32` dims, `u8` precision tag
//! (4 or 8), then the little-endian scalar payload in row-major order.

use std::fs;
use std::path::Path;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TSQ1";

/// A tensor read from disk in whichever precision it was stored.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn precision_tag(&self) -> u8 {
        match self {
            AnyTensor::F32(_) => 4,
            AnyTensor::F64(_) => 8,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to the requested precision. Same-precision conversion is a move.
    pub fn into_precision<T: Scalar>(self) -> Tensor<T> {
        use std::any::Any;
        match self {
            AnyTensor::F32(t) => {
                let boxed: Box<dyn Any> = Box::new(t);
                match boxed.downcast::<Tensor<T>>() {
                    Ok(same) => *same,
                    Err(b) => b.downcast::<Tensor<f32>>().expect("f32").cast(),
                }
            }
            AnyTensor::F64(t) => {
                let boxed: Box<dyn Any> = Box::new(t);
                match boxed.downcast::<Tensor<T>>() {
                    Ok(same) => *same,
                    Err(b) => b.downcast::<Tensor<f64>>().expect("f64").cast(),
                }
            }
        }
    }
}

pub fn write_tensor_to<T: Scalar>(t: &Tensor<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(T::TAG);
    out.reserve(t.len() * T::TAG as usize);
    for &x in t.data() {
        x.write_le(out);
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err(format!("truncated tensor data at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn payload<T: Scalar>(c: &mut Cursor<'_>, shape: Vec<usize>) -> std::result::Result<Tensor<T>, String> {
    let n: usize = shape.iter().product();
    let w = T::TAG as usize;
    let raw = c.take(n * w)?;
    let data = raw.chunks_exact(w).map(T::read_le).collect();
    Tensor::new(shape, data).map_err(|e| e.to_string())
}

/// Parses one tensor from the front of `bytes`, returning it and the number
/// of bytes consumed.
pub fn read_tensor_from(bytes: &[u8]) -> std::result::Result<(AnyTensor, usize), String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err("bad magic, expected TSQ1".into());
    }
    let rank = c.u32()? as usize;
    if rank == 0 || rank > 16 {
        return Err(format!("unsupported rank {rank}"));
    }
    let shape = (0..rank)
        .map(|_| c.u32().map(|d| d as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let tag = c.take(1)?[0];
    let t = match tag {
        4 => AnyTensor::F32(payload(&mut c, shape)?),
        8 => AnyTensor::F64(payload(&mut c, shape)?),
        other => return Err(format!("unknown precision tag {other}")),
    };
    Ok((t, c.pos))
}

pub fn write_tensor<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_tensor_to(t, &mut buf);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (t, used) = read_tensor_from(&bytes).map_err(|m| Error::format(path, m))?;
    if used != bytes.len() {
        return Err(Error::format(path, "trailing bytes after tensor payload"));
    }
    Ok(t)
}
