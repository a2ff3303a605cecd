//! Cross-view geometric consistency filtering and point-cloud fusion.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::inference::{ConfidenceMap, DepthMap};
use crate::io::PointCloud;
use crate::tensor::Tensor;

/// Divisor applied to `n` when scaling thresholds in dynamic mode.
const DYNAMIC_DIVISOR: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    Static,
    Dynamic,
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(FilterMode::Static),
            "dynamic" => Ok(FilterMode::Dynamic),
            other => Err(Error::Config(format!("unknown filter mode {other:?}"))),
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterMode::Static => "static",
            FilterMode::Dynamic => "dynamic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    /// Relative depth tolerance `|d_back - d| / d`.
    pub disparity_threshold: f64,
    pub num_consistent: usize,
    pub prob_threshold: f64,
    pub reproj_threshold_px: f64,
    pub mode: FilterMode,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            disparity_threshold: 0.1,
            num_consistent: 2,
            prob_threshold: 0.5,
            reproj_threshold_px: 1.0,
            mode: FilterMode::Static,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.disparity_threshold)
            || !positive(self.prob_threshold)
            || !positive(self.reproj_threshold_px)
        {
            return Err(Error::Config(format!("filter thresholds must be positive: {self:?}")));
        }
        if self.num_consistent == 0 {
            return Err(Error::Config("num_consistent must be at least 1".into()));
        }
        Ok(())
    }
}

/// A depth estimate together with its confidence and camera.
#[derive(Clone, Debug)]
pub struct ViewEstimate {
    pub depth: DepthMap,
    pub confidence: ConfidenceMap,
    pub camera: CameraView,
}

impl ViewEstimate {
    pub fn new(depth: DepthMap, confidence: ConfidenceMap, camera: CameraView) -> Result<Self> {
        let (h, w) = (camera.height(), camera.width());
        if depth.data().shape() != [h, w] || confidence.data().shape() != [h, w] {
            return Err(Error::Shape(format!(
                "depth {:?} and confidence {:?} must match the {h}x{w} camera image",
                depth.data().shape(),
                confidence.data().shape()
            )));
        }
        Ok(ViewEstimate {
            depth,
            confidence,
            camera,
        })
    }
}

/// Outcome of reprojecting one reference pixel through one source view.
#[derive(Clone, Copy, Debug)]
struct RoundTrip {
    pixel_error: f64,
    relative_error: f64,
    /// Source pixel hit by the forward projection.
    src_uv: (f64, f64),
    /// Source depth unprojected back into the world.
    src_point: Vector3<f64>,
}

impl RoundTrip {
    fn within(&self, px: f64, rel: f64) -> bool {
        self.pixel_error < px && self.relative_error < rel
    }
}

/// Bilinear depth lookup; `None` when any neighbor with non-zero weight is invalid.
fn sample_depth(depth: &DepthMap, u: f64, v: f64) -> Option<f64> {
    let (h, w) = (depth.height(), depth.width());
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return None;
    }
    let (x0, y0) = (u.floor() as usize, v.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (u - x0 as f64, v - y0 as f64);
    let mut acc = 0.0;
    for (y, wy) in [(y0, 1.0 - fy), (y1, fy)] {
        for (x, wx) in [(x0, 1.0 - fx), (x1, fx)] {
            if wy * wx == 0.0 {
                continue;
            }
            let d = depth.at(y, x) as f64;
            if !(d > 0.0) {
                return None;
            }
            acc += wy * wx * d;
        }
    }
    Some(acc)
}

fn round_trip(reference: &ViewEstimate, src: &ViewEstimate, x: usize, y: usize, d: f64) -> Option<RoundTrip> {
    let world = reference.camera.unproject(x as f64, y as f64, d);
    let (u, v, _) = src.camera.project(&world)?;
    let d_src = sample_depth(&src.depth, u, v)?;
    let src_point = src.camera.unproject(u, v, d_src);
    let (xb, yb, d_back) = reference.camera.project(&src_point)?;
    Some(RoundTrip {
        pixel_error: (xb - x as f64).hypot(yb - y as f64),
        relative_error: (d_back - d).abs() / d,
        src_uv: (u, v),
        src_point,
    })
}

/// Indices into `trips` of the views supporting a pixel, or `None` if it fails.
fn supporters(trips: &[Option<RoundTrip>], params: &FilterParams) -> Option<Vec<usize>> {
    let passing = |scale: f64| -> Vec<usize> {
        trips
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                t.is_some_and(|t| {
                    t.within(
                        params.reproj_threshold_px * scale,
                        params.disparity_threshold * scale,
                    )
                })
            })
            .map(|(i, _)| i)
            .collect()
    };
    match params.mode {
        FilterMode::Static => {
            let s = passing(1.0);
            (s.len() >= params.num_consistent).then_some(s)
        }
        FilterMode::Dynamic => (1..=trips.len()).rev().find_map(|n| {
            let s = passing(n as f64 / DYNAMIC_DIVISOR);
            (s.len() >= n).then_some(s)
        }),
    }
}

fn check_sources(srcs: &[&ViewEstimate]) -> Result<()> {
    if srcs.is_empty() {
        return Err(Error::NotEnoughViews {
            required: 1,
            found: 0,
        });
    }
    Ok(())
}

/// Per-pixel filter mask (`0`/`1`) and the number of source views
/// consistent at the base thresholds.
pub fn consistency_check(
    reference: &ViewEstimate,
    srcs: &[&ViewEstimate],
    params: &FilterParams,
) -> Result<(Tensor, Tensor)> {
    params.validate()?;
    check_sources(srcs)?;
    let (h, w) = (reference.depth.height(), reference.depth.width());
    let mut mask = Tensor::zeros(&[h, w]);
    let mut support = Tensor::zeros(&[h, w]);
    let mut trips = Vec::with_capacity(srcs.len());
    for y in 0..h {
        for x in 0..w {
            let d = reference.depth.at(y, x) as f64;
            if !(d > 0.0) || (reference.confidence.at(y, x) as f64) < params.prob_threshold {
                continue;
            }
            trips.clear();
            trips.extend(srcs.iter().map(|s| round_trip(reference, s, x, y, d)));
            let count = trips
                .iter()
                .flatten()
                .filter(|t| t.within(params.reproj_threshold_px, params.disparity_threshold))
                .count();
            support.data_mut()[y * w + x] = count as f32;
            if supporters(&trips, params).is_some() {
                mask.data_mut()[y * w + x] = 1.0;
            }
        }
    }
    Ok((mask, support))
}

fn color_at(image: &Tensor, x: usize, y: usize) -> [u8; 3] {
    let w = image.shape()[1];
    let px = &image.data()[(y * w + x) * 3..(y * w + x) * 3 + 3];
    px.iter()
        .map(|&c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect::<Vec<_>>()
        .try_into()
        .expect("three channels")
}

/// Fuses every view against all others, reference views in list order.
///
/// Accepted pixels become the mean of their own 3-D point and the points
/// reconstructed by their supporting views. Source pixels that supported
/// an emitted point are consumed and never seed a point of their own.
pub fn fuse_to_cloud(views: &[ViewEstimate], params: &FilterParams) -> Result<PointCloud> {
    params.validate()?;
    if views.len() < 2 {
        return Err(Error::NotEnoughViews {
            required: 2,
            found: views.len(),
        });
    }
    let mut consumed: Vec<Vec<bool>> = views
        .iter()
        .map(|v| vec![false; v.depth.height() * v.depth.width()])
        .collect();
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut trips = Vec::with_capacity(views.len() - 1);
    for (r, reference) in views.iter().enumerate() {
        let others: Vec<usize> = (0..views.len()).filter(|&i| i != r).collect();
        let (h, w) = (reference.depth.height(), reference.depth.width());
        for y in 0..h {
            for x in 0..w {
                if consumed[r][y * w + x] {
                    continue;
                }
                let d = reference.depth.at(y, x) as f64;
                if !(d > 0.0) || (reference.confidence.at(y, x) as f64) < params.prob_threshold {
                    continue;
                }
                trips.clear();
                trips.extend(others.iter().map(|&i| round_trip(reference, &views[i], x, y, d)));
                let Some(support) = supporters(&trips, params) else {
                    continue;
                };
                let mut sum = reference.camera.unproject(x as f64, y as f64, d);
                for &k in &support {
                    let trip = trips[k].expect("supporting views have round trips");
                    sum += trip.src_point;
                    let src = others[k];
                    let sw = views[src].depth.width();
                    let (su, sv) = (trip.src_uv.0.round() as usize, trip.src_uv.1.round() as usize);
                    consumed[src][sv * sw + su] = true;
                }
                consumed[r][y * w + x] = true;
                let mean = sum / (support.len() + 1) as f64;
                points.push([mean.x as f32, mean.y as f32, mean.z as f32]);
                colors.push(color_at(reference.camera.image(), x, y));
            }
        }
    }
    PointCloud::new(points, colors)
}
