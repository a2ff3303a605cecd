use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MVTF";
pub const MVTF_VERSION: u32 = 1;

/// Layout: `"MVTF"`, then little-endian `u32` version, ndim and each dim,
/// then the row-major little-endian `f32` payload.
pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.ndim() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MVTF_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.take(4)?;
    if magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(Error::BadMagic { found });
    }
    let version = cursor.u32()?;
    if version != MVTF_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: MVTF_VERSION,
        });
    }
    let ndim = cursor.u32()? as usize;
    if !(1..=4).contains(&ndim) {
        return Err(Error::Shape(format!("ndim {ndim} outside 1..=4")));
    }
    let shape = (0..ndim)
        .map(|_| cursor.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let len: usize = shape.iter().product();
    let payload = cursor.take(len * 4)?;
    if cursor.pos != bytes.len() {
        return Err(Error::Shape(format!(
            "{} trailing bytes after payload",
            bytes.len() - cursor.pos
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_tensor_file(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_tensor(t))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&super::read_bytes(path.as_ref())?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
