//! On-disk formats: MVTF tensors, PFM depth maps, binary PLY clouds,
//! camera text files and 8-bit PGM/PPM images.

mod cam;
mod mvtf;
mod pfm;
mod ply;
mod pnm;

pub(crate) use cam::rotation_deviation;
pub use cam::{format_cam, parse_cam, read_cam, write_cam, CamFile};
pub use mvtf::{decode_tensor, encode_tensor, read_tensor_file, write_tensor_file, MVTF_VERSION};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use ply::{decode_ply, encode_ply, read_ply, write_ply, PointCloud};
pub use pnm::{decode_pnm, encode_ppm, read_image, write_ppm};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::file(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Reads one whitespace-delimited ASCII token starting at `*pos`.
pub(crate) fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return None;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()
}
