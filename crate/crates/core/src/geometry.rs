//! Pinhole cameras, plane-sweep warping and depth hypothesis generation.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::inference::DepthMap;
use crate::io::CamFile;
use crate::tensor::Tensor;

const ROTATION_TOL: f64 = 1e-4;
/// Homogeneous depth at or below which a warp is treated as behind the camera.
pub const MIN_WARP_DEPTH: f64 = 1e-8;

/// One posed view: world-to-camera `x_cam = R·X + t`, pixels `K·x_cam / z`.
#[derive(Clone, Debug)]
pub struct CameraView {
    k: Matrix3<f64>,
    r: Matrix3<f64>,
    t: Vector3<f64>,
    image: Tensor,
    d_min: f64,
    d_max: f64,
}

impl CameraView {
    pub fn new(
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        image: Tensor,
        d_min: f64,
        d_max: f64,
    ) -> Result<Self> {
        validate_intrinsics(&k)?;
        let deviation = crate::io::rotation_deviation(&r);
        if deviation > ROTATION_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        if !(d_min > 0.0 && d_min < d_max) {
            return Err(Error::InvertedDepthRange { d_min, d_max });
        }
        let shape = image.expect_dims(3, "view image")?;
        if shape[2] != 3 {
            return Err(Error::Shape(format!("view image must be HxWx3, got {shape:?}")));
        }
        Ok(CameraView {
            k,
            r,
            t,
            image,
            d_min,
            d_max,
        })
    }

    pub fn from_cam_file(cam: &CamFile, image: Tensor) -> Result<Self> {
        Self::new(cam.k, cam.r, cam.t, image, cam.d_min, cam.d_max)
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn r(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn t(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn image(&self) -> &Tensor {
        &self.image
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn height(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn with_image(&self, image: Tensor) -> Result<Self> {
        Self::new(self.k, self.r, self.t, image, self.d_min, self.d_max)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.r.transpose() * self.t)
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.r * world + self.t
    }

    /// Projects a world point; returns `(u, v, z)` or `None` behind the camera.
    pub fn project(&self, world: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let q = self.k * self.to_camera(world);
        (q.z > MIN_WARP_DEPTH).then(|| (q.x / q.z, q.y / q.z, q.z))
    }

    /// World point seen at pixel `(u, v)` with camera-frame depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let k_inv = self.k.try_inverse().expect("validated intrinsics are invertible");
        let cam = k_inv * Vector3::new(u, v, 1.0) * depth;
        self.r.transpose() * (cam - self.t)
    }
}

fn validate_intrinsics(k: &Matrix3<f64>) -> Result<()> {
    if k[(2, 2)] != 1.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(1, 0)] != 0.0 {
        return Err(Error::Intrinsics(format!(
            "expected upper-triangular K with K[2][2] = 1, got {k}"
        )));
    }
    if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
        return Err(Error::Intrinsics("focal lengths must be positive".into()));
    }
    Ok(())
}

/// Scales the first two rows of `K` (focal lengths and principal point).
pub fn scale_intrinsics(k: &Matrix3<f64>, scale: f64) -> Matrix3<f64> {
    let mut out = *k;
    for c in 0..3 {
        out[(0, c)] *= scale;
        out[(1, c)] *= scale;
    }
    out
}

/// Transform from the reference camera frame to the source camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePose {
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

pub fn relative_pose(reference: &CameraView, source: &CameraView) -> RelativePose {
    let r = source.r * reference.r.transpose();
    let t = source.t - r * reference.t;
    RelativePose { r, t }
}

/// Precomputed `q = A·(u, v, 1)·d + b` form of the plane-sweep warp.
#[derive(Clone, Copy, Debug)]
struct WarpOperator {
    a: Matrix3<f64>,
    b: Vector3<f64>,
}

impl WarpOperator {
    fn new(k_ref: &Matrix3<f64>, k_src: &Matrix3<f64>, pose: &RelativePose) -> Self {
        let k_ref_inv = k_ref.try_inverse().expect("intrinsics must be invertible");
        WarpOperator {
            a: k_src * pose.r * k_ref_inv,
            b: k_src * pose.t,
        }
    }

    #[inline]
    fn apply(&self, ray: &Vector3<f64>, depth: f64) -> Option<(f64, f64)> {
        let q = ray * depth + self.b;
        (q.z > MIN_WARP_DEPTH).then(|| (q.x / q.z, q.y / q.z))
    }
}

/// Maps reference pixel `p` at depth `depth` into the source image.
/// `None` marks a point behind the source camera.
pub fn warp_pixel(
    p: (f64, f64),
    depth: f64,
    k_ref: &Matrix3<f64>,
    k_src: &Matrix3<f64>,
    pose: &RelativePose,
) -> Option<(f64, f64)> {
    let op = WarpOperator::new(k_ref, k_src, pose);
    op.apply(&(op.a * Vector3::new(p.0, p.1, 1.0)), depth)
}

/// Per-pixel ordered depth candidates for one stage, `D×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthHypotheses {
    stage: usize,
    values: Tensor,
    interval: f64,
}

impl DepthHypotheses {
    pub fn new(stage: usize, values: Tensor, interval: f64) -> Result<Self> {
        if !(1..=4).contains(&stage) {
            return Err(Error::StageOutOfRange(stage));
        }
        values.expect_dims(3, "depth hypotheses")?;
        Ok(DepthHypotheses {
            stage,
            values,
            interval,
        })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Inverse-depth spacing between neighbouring hypotheses.
    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn count(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    #[inline]
    pub fn depth(&self, j: usize, y: usize, x: usize) -> f32 {
        self.values.at3(j, y, x)
    }
}

fn check_range(d_min: f64, d_max: f64) -> Result<()> {
    if !(d_min > 0.0 && d_min < d_max && d_max.is_finite()) {
        return Err(Error::DegenerateRange(format!("[{d_min}, {d_max}]")));
    }
    Ok(())
}

/// Stage-1 hypotheses: `count` depths uniform in inverse depth over
/// `[1/d_max, 1/d_min]`, identical at every pixel, sorted by increasing depth.
pub fn init_hypotheses(
    d_min: f64,
    d_max: f64,
    count: usize,
    height: usize,
    width: usize,
) -> Result<DepthHypotheses> {
    check_range(d_min, d_max)?;
    if count < 2 {
        return Err(Error::DegenerateRange(format!(
            "need at least 2 hypotheses, got {count}"
        )));
    }
    let (inv_lo, inv_hi) = (1.0 / d_max, 1.0 / d_min);
    let interval = (inv_hi - inv_lo) / (count - 1) as f64;
    // j = 0 is the largest inverse depth, i.e. the nearest plane
    let depths: Vec<f32> = (0..count)
        .map(|j| {
            if j == 0 {
                d_min as f32
            } else if j == count - 1 {
                d_max as f32
            } else {
                (1.0 / (inv_hi - j as f64 * interval)) as f32
            }
        })
        .collect();
    let plane = height * width;
    let mut data = Vec::with_capacity(count * plane);
    for d in &depths {
        data.extend(std::iter::repeat_n(*d, plane));
    }
    DepthHypotheses::new(1, Tensor::new(vec![count, height, width], data)?, interval)
}

/// Inverse-depth spacing of stage `stage` given the stage-1 spacing.
pub fn stage_interval(base_interval: f64, stage: usize) -> f64 {
    base_interval / (1u64 << (stage - 1)) as f64
}

/// Stage-`stage` hypotheses: an inverse-depth window of `count` samples at
/// spacing `base_interval / 2^(stage-1)` centered on the upsampled previous
/// estimate and shifted (not shrunk) to stay inside `[1/d_max, 1/d_min]`.
/// Invalid (zero) previous depths fall back to the middle of the range.
pub fn refine_hypotheses(
    prev: &DepthMap,
    stage: usize,
    base_interval: f64,
    count: usize,
    d_min: f64,
    d_max: f64,
) -> Result<DepthHypotheses> {
    if !(2..=4).contains(&stage) {
        return Err(Error::StageOutOfRange(stage));
    }
    check_range(d_min, d_max)?;
    if count < 2 || !(base_interval > 0.0) {
        return Err(Error::DegenerateRange(format!(
            "{count} hypotheses at interval {base_interval}"
        )));
    }
    let up = upsample_depth(prev);
    let (h, w) = (up.height(), up.width());
    let interval = stage_interval(base_interval, stage);
    let (inv_lo, inv_hi) = (1.0 / d_max, 1.0 / d_min);
    let span = interval * (count - 1) as f64;
    let plane = h * w;
    let mut data = vec![0f32; count * plane];
    for (i, &d) in up.data().data().iter().enumerate() {
        let center = if d > 0.0 {
            1.0 / d as f64
        } else {
            0.5 * (inv_lo + inv_hi)
        };
        let (start, step) = if span >= inv_hi - inv_lo {
            (inv_hi, (inv_hi - inv_lo) / (count - 1) as f64)
        } else {
            let top = (center + 0.5 * span).clamp(inv_lo + span, inv_hi);
            (top, interval)
        };
        for j in 0..count {
            let inv = if j == 0 { start } else { start - j as f64 * step };
            let depth = if inv >= inv_hi {
                d_min
            } else if inv <= inv_lo {
                d_max
            } else {
                1.0 / inv
            };
            data[j * plane + i] = depth as f32;
        }
    }
    DepthHypotheses::new(stage, Tensor::new(vec![count, h, w], data)?, interval)
}

/// Nearest-neighbour ×2 upsampling: `out[y][x] = in[y/2][x/2]`.
pub fn upsample_depth(depth: &DepthMap) -> DepthMap {
    let src = depth.data();
    let (h, w) = (src.shape()[0], src.shape()[1]);
    let mut data = Vec::with_capacity(4 * h * w);
    for y in 0..2 * h {
        let row = &src.data()[(y / 2) * w..(y / 2 + 1) * w];
        data.extend(row.iter().flat_map(|&v| [v, v]));
    }
    let tensor = Tensor::new(vec![2 * h, 2 * w], data).expect("shape is consistent");
    DepthMap::new(tensor, (depth.stage() + 1).min(4)).expect("2-D depth map")
}

/// Source features resampled onto the reference grid for every hypothesis.
#[derive(Clone, Debug)]
pub struct WarpedFeatures {
    /// `C×D×H×W`
    pub features: Tensor,
    /// `D×H×W`, 1 where the sample was in bounds and in front of the camera.
    pub validity: Tensor,
}

/// Bilinearly samples `src_feat` (`C×H×W`) at the warp of every reference
/// pixel for every hypothesis. Intrinsics must already be scaled to the
/// feature resolution. Out-of-bounds or behind-camera samples are zero with
/// validity 0.
pub fn warp_feature(
    src_feat: &Tensor,
    hyp: &DepthHypotheses,
    k_ref: &Matrix3<f64>,
    k_src: &Matrix3<f64>,
    pose: &RelativePose,
) -> Result<WarpedFeatures> {
    let shape = src_feat.expect_dims(3, "source features")?;
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if (h, w) != (hyp.height(), hyp.width()) {
        return Err(Error::Shape(format!(
            "features are {h}x{w} but hypotheses are {}x{}",
            hyp.height(),
            hyp.width()
        )));
    }
    let d = hyp.count();
    let plane = h * w;
    let op = WarpOperator::new(k_ref, k_src, pose);
    let mut features = vec![0f32; c * d * plane];
    let mut validity = vec![0f32; d * plane];
    let src = src_feat.data();
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);

    for y in 0..h {
        for x in 0..w {
            let ray = op.a * Vector3::new(x as f64, y as f64, 1.0);
            for j in 0..d {
                let depth = hyp.depth(j, y, x) as f64;
                let Some((u, v)) = op.apply(&ray, depth) else {
                    continue;
                };
                if !(u >= 0.0 && v >= 0.0 && u <= max_x && v <= max_y) {
                    continue;
                }
                let (x0, y0) = (u.floor() as usize, v.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (fx, fy) = ((u - x0 as f64) as f32, (v - y0 as f64) as f32);
                let w00 = (1.0 - fx) * (1.0 - fy);
                let w01 = fx * (1.0 - fy);
                let w10 = (1.0 - fx) * fy;
                let w11 = fx * fy;
                let pix = y * w + x;
                validity[j * plane + pix] = 1.0;
                for ch in 0..c {
                    let base = ch * plane;
                    let s = w00 * src[base + y0 * w + x0]
                        + w01 * src[base + y0 * w + x1]
                        + w10 * src[base + y1 * w + x0]
                        + w11 * src[base + y1 * w + x1];
                    features[(ch * d + j) * plane + pix] = s;
                }
            }
        }
    }
    Ok(WarpedFeatures {
        features: Tensor::new(vec![c, d, h, w], features)?,
        validity: Tensor::new(vec![d, h, w], validity)?,
    })
}
