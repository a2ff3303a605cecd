use std::path::Path;

use crate::error::{Error, Result};

/// Colored point cloud in world units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
    colors: Vec<[u8; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(Error::Shape(format!(
                "{} points but {} colors",
                points.len(),
                colors.len()
            )));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Shape("non-finite point coordinate".into()));
        }
        Ok(PointCloud { points, colors })
    }

    /// Cloud with every point colored white.
    pub fn from_points(points: Vec<[f32; 3]>) -> Result<Self> {
        let colors = vec![[255; 3]; points.len()];
        Self::new(points, colors)
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn header(count: usize) -> String {
    format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {count}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    )
}

pub fn encode_ply(pc: &PointCloud) -> Vec<u8> {
    let header = header(pc.len());
    let mut out = Vec::with_capacity(header.len() + 15 * pc.len());
    out.extend_from_slice(header.as_bytes());
    for (p, c) in pc.points.iter().zip(&pc.colors) {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(c);
    }
    out
}

/// Reads back exactly the layout produced by [`encode_ply`].
pub fn decode_ply(bytes: &[u8]) -> Result<PointCloud> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::MalformedHeader("missing end_header".into()))?
        + END.len();
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::MalformedHeader("non-ASCII PLY header".into()))?;
    let count = text
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::MalformedHeader("missing vertex count".into()))?;
    if text != header(count) {
        return Err(Error::MalformedHeader(
            "unsupported PLY layout (expected binary little-endian xyz + rgb)".into(),
        ));
    }
    let payload = &bytes[end..];
    if payload.len() != 15 * count {
        return Err(Error::Truncated {
            expected: end + 15 * count,
            found: bytes.len(),
        });
    }
    let mut points = Vec::with_capacity(count);
    let mut colors = Vec::with_capacity(count);
    for rec in payload.chunks_exact(15) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
        points.push([f(0), f(1), f(2)]);
        colors.push([rec[12], rec[13], rec[14]]);
    }
    PointCloud::new(points, colors)
}

pub fn write_ply(pc: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_ply(pc))
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    decode_ply(&super::read_bytes(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cloud() {
        let bytes = encode_ply(&PointCloud::default());
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("element vertex 0\n"));
        assert!(text.ends_with("end_header\n"));
        assert_eq!(decode_ply(&bytes).unwrap(), PointCloud::default());
    }

    #[test]
    fn single_point_payload_size() {
        let pc = PointCloud::new(vec![[0.0; 3]], vec![[255; 3]]).unwrap();
        let bytes = encode_ply(&pc);
        assert_eq!(bytes.len(), header(1).len() + 15);
        assert_eq!(&bytes[bytes.len() - 3..], &[255, 255, 255]);
    }

    #[test]
    fn invariants_enforced() {
        assert!(PointCloud::new(vec![[0.0; 3]], vec![]).is_err());
        assert!(PointCloud::new(vec![[f32::NAN, 0.0, 0.0]], vec![[0; 3]]).is_err());
    }

    #[test]
    fn truncated_payload() {
        let pc = PointCloud::from_points(vec![[1.0, 2.0, 3.0]]).unwrap();
        let bytes = encode_ply(&pc);
        assert!(matches!(
            decode_ply(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
    }
}
