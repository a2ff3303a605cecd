use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decodes binary 8-bit PGM (`P5`) or PPM (`P6`) into an `H×W×3` tensor in
/// `[0, 1]`; grayscale is replicated across the three channels.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<&str> {
        // skip comment lines between header tokens
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        super::next_token(bytes, &mut pos)
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))
    };
    let channels = match token("magic")? {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported image type {other:?} (binary P5/P6 only)"
            )))
        }
    };
    let mut num = |what: &str| -> Result<usize> {
        let t = token(what)?;
        t.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::MalformedHeader(format!("bad {what} {t:?}")))
    };
    let w = num("width")?;
    let h = num("height")?;
    let maxval = num("maxval")?;
    if maxval > 255 {
        return Err(Error::MalformedHeader(format!(
            "16-bit images are not supported (maxval {maxval})"
        )));
    }
    pos += 1;
    let expected = w * h * channels;
    let payload = bytes.get(pos..pos + expected).ok_or(Error::Truncated {
        expected: pos + expected,
        found: bytes.len(),
    })?;
    let scale = 1.0 / maxval as f32;
    let data = if channels == 3 {
        payload.iter().map(|&b| b as f32 * scale).collect()
    } else {
        payload
            .iter()
            .flat_map(|&b| [b as f32 * scale; 3])
            .collect()
    };
    Tensor::new(vec![h, w, 3], data)
}

/// Encodes an `H×W×3` tensor in `[0, 1]` as binary PPM (values are clamped and rounded).
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let shape = image.expect_dims(3, "image")?;
    if shape[2] != 3 {
        return Err(Error::Shape(format!("image must have 3 channels, got {shape:?}")));
    }
    let header = format!("P6\n{} {}\n255\n", shape[1], shape[0]);
    let mut out = header.into_bytes();
    out.extend(
        image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_pnm(&super::read_bytes(path.as_ref())?)
}

pub fn write_ppm(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_ppm(image)?)
}
