use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Grayscale little-endian PFM: `"Pf\n<W> <H>\n-1.0\n"`, rows bottom to top.
/// Invalid depth is stored as `0.0`.
pub fn encode_pfm(depth: &Tensor) -> Result<Vec<u8>> {
    let shape = depth.expect_dims(2, "PFM depth map")?;
    let (h, w) = (shape[0], shape[1]);
    let header = format!("Pf\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + 4 * h * w);
    out.extend_from_slice(header.as_bytes());
    for row in depth.data().chunks_exact(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut token = |what: &str| {
        super::next_token(bytes, &mut pos)
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))
    };
    match token("type")? {
        "Pf" => {}
        "PF" => {
            return Err(Error::MalformedHeader(
                "three-channel PF maps are not depth maps".into(),
            ))
        }
        other => return Err(Error::MalformedHeader(format!("unknown type {other:?}"))),
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::MalformedHeader(format!("bad dimension {s:?}")))
    };
    let w = parse_dim(token("width")?)?;
    let h = parse_dim(token("height")?)?;
    let scale_str = token("scale")?;
    let scale: f64 = scale_str
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad scale {scale_str:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader(format!("bad scale {scale_str:?}")));
    }
    if scale > 0.0 {
        return Err(Error::UnsupportedEndianness(scale));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing header terminator".into()));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = 4 * w * h;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected: pos + expected,
            found: bytes.len(),
        });
    }
    let mut data = vec![0f32; w * h];
    for (r, row) in payload[..expected].chunks_exact(4 * w).enumerate() {
        let dst = &mut data[(h - 1 - r) * w..(h - r) * w];
        for (d, c) in dst.iter_mut().zip(row.chunks_exact(4)) {
            *d = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    Tensor::new(vec![h, w], data)
}

pub fn write_pfm(depth: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_pfm(depth)?)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_pfm(&super::read_bytes(path.as_ref())?)
}
