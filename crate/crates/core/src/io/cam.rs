use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Parsed camera text file.
///
/// ```text
/// extrinsic
/// r00 r01 r02 t0
/// r10 r11 r12 t1
/// r20 r21 r22 t2
/// 0 0 0 1
///
/// intrinsic
/// fx 0 cx
/// 0 fy cy
/// 0 0 1
///
/// d_min d_interval d_num d_max
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct CamFile {
    pub k: Matrix3<f64>,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
    pub d_min: f64,
    pub d_interval: f64,
    pub d_num: f64,
    pub d_max: f64,
}

const ORTHO_TOL: f64 = 1e-4;

pub(crate) fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    ortho.max(det)
}

pub fn parse_cam(text: &str) -> Result<CamFile> {
    // (line number, token) pairs so errors can point at the source line
    let tokens: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
        .collect();
    let find = |key: &'static str| {
        tokens
            .iter()
            .position(|&(_, t)| t == key)
            .ok_or(Error::MissingSection(key))
    };
    let numbers = |start: usize, n: usize| -> Result<Vec<f64>> {
        let slice = tokens.get(start..start + n).ok_or_else(|| Error::Parse {
            line: tokens.last().map_or(1, |t| t.0),
            message: format!("expected {n} numbers"),
        })?;
        slice
            .iter()
            .map(|&(line, t)| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a number: {t:?}"),
                })
            })
            .collect()
    };

    let ext_at = find("extrinsic")?;
    let int_at = find("intrinsic")?;
    let ext = numbers(ext_at + 1, 16)?;
    let int = numbers(int_at + 1, 9)?;
    let depth = numbers(int_at + 10, 4)?;

    let r = Matrix3::new(
        ext[0], ext[1], ext[2], ext[4], ext[5], ext[6], ext[8], ext[9], ext[10],
    );
    let t = Vector3::new(ext[3], ext[7], ext[11]);
    let k = Matrix3::from_row_slice(&int);

    let deviation = rotation_deviation(&r);
    if deviation > ORTHO_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    let (d_min, d_interval, d_num, d_max) = (depth[0], depth[1], depth[2], depth[3]);
    if !(d_min > 0.0 && d_min < d_max) {
        return Err(Error::InvertedDepthRange { d_min, d_max });
    }
    Ok(CamFile {
        k,
        r,
        t,
        d_min,
        d_interval,
        d_num,
        d_max,
    })
}

pub fn read_cam(path: impl AsRef<Path>) -> Result<CamFile> {
    let bytes = super::read_bytes(path.as_ref())?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::MalformedHeader("camera file is not UTF-8".into()))?;
    parse_cam(&text)
}

pub fn format_cam(cam: &CamFile) -> String {
    let mut s = String::from("extrinsic\n");
    for i in 0..3 {
        let _ = writeln!(
            s,
            "{} {} {} {}",
            cam.r[(i, 0)],
            cam.r[(i, 1)],
            cam.r[(i, 2)],
            cam.t[i]
        );
    }
    s.push_str("0 0 0 1\n\nintrinsic\n");
    for i in 0..3 {
        let _ = writeln!(s, "{} {} {}", cam.k[(i, 0)], cam.k[(i, 1)], cam.k[(i, 2)]);
    }
    let _ = writeln!(
        s,
        "\n{} {} {} {}",
        cam.d_min, cam.d_interval, cam.d_num, cam.d_max
    );
    s
}

pub fn write_cam(cam: &CamFile, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), format_cam(cam).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: &str = "extrinsic\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\n\
                            intrinsic\n100 0 0\n0 100 0\n0 0 1\n\n1 0.1 32 5\n";

    #[test]
    fn identity_camera() {
        let cam = parse_cam(IDENTITY).unwrap();
        assert_eq!(cam.r, Matrix3::identity());
        assert_eq!(cam.t, Vector3::zeros());
        assert_eq!(cam.k, Matrix3::from_diagonal(&Vector3::new(100.0, 100.0, 1.0)));
        assert_eq!((cam.d_min, cam.d_interval, cam.d_num, cam.d_max), (1.0, 0.1, 32.0, 5.0));
    }

    #[test]
    fn inverted_range() {
        let text = IDENTITY.replace("1 0.1 32 5", "5 0.1 32 1");
        assert!(matches!(
            parse_cam(&text),
            Err(Error::InvertedDepthRange { d_min, d_max }) if d_min == 5.0 && d_max == 1.0
        ));
    }

    #[test]
    fn rotation_about_z() {
        let a = 10f64.to_radians();
        let (s, c) = a.sin_cos();
        let text = format!(
            "extrinsic\n{c} {} 0 0.5\n{s} {c} 0 -1\n0 0 1 2\n0 0 0 1\n\n\
             intrinsic\n100 0 32\n0 100 24\n0 0 1\n\n1 0.1 32 5\n",
            -s
        );
        let cam = parse_cam(&text).unwrap();
        let expected = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        assert!((cam.r - expected).abs().max() < 1e-6);
        assert_eq!(cam.t, Vector3::new(0.5, -1.0, 2.0));
    }

    #[test]
    fn missing_sections() {
        let text = IDENTITY.replace("intrinsic", "intrinsics");
        assert!(matches!(parse_cam(&text), Err(Error::MissingSection("intrinsic"))));
        let text = IDENTITY.replace("extrinsic", "");
        assert!(matches!(parse_cam(&text), Err(Error::MissingSection("extrinsic"))));
    }

    #[test]
    fn non_orthonormal_rotation() {
        let text = IDENTITY.replace("1 0 0 0\n0 1", "1.1 0 0 0\n0 1");
        assert!(matches!(parse_cam(&text), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn format_round_trip() {
        let mut cam = parse_cam(IDENTITY).unwrap();
        cam.t = Vector3::new(0.25, -3.0, 1.0 / 3.0);
        cam.k[(0, 2)] = 95.5;
        assert_eq!(parse_cam(&format_cam(&cam)).unwrap(), cam);
    }
}
