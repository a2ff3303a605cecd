//! Group-wise correlation volumes, entropy-based visibility, weighted
//! multi-view fusion and the fixed Gaussian regularizer.

use crate::error::{Error, Result};
use crate::geometry::WarpedFeatures;
use crate::tensor::Tensor;

/// Lower bound of visibility weights.
pub const VISIBILITY_FLOOR: f32 = 1e-3;
/// Value written where no source view produced a valid sample.
pub const INVALID_CORRELATION: f32 = -1.0;

/// Per-group correlations `G×D×H×W` plus sample validity `D×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostVolume {
    data: Tensor,
    validity: Tensor,
}

impl CostVolume {
    pub fn new(data: Tensor, validity: Tensor) -> Result<Self> {
        let shape = data.expect_dims(4, "cost volume")?;
        let vshape = validity.expect_dims(3, "validity")?;
        if shape[1..] != *vshape {
            return Err(Error::Shape(format!(
                "validity {vshape:?} does not match volume {shape:?}"
            )));
        }
        Ok(CostVolume { data, validity })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn validity(&self) -> &Tensor {
        &self.validity
    }

    pub fn groups(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn depth_count(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }

    /// Mean over groups, `D×H×W`.
    pub fn group_mean(&self) -> Tensor {
        let (g, rest) = (self.groups(), self.validity.len());
        let mut out = vec![0f32; rest];
        for chunk in self.data.data().chunks_exact(rest) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        let inv = 1.0 / g as f32;
        out.iter_mut().for_each(|v| *v *= inv);
        Tensor::new(self.validity.shape().to_vec(), out).expect("validity shape")
    }
}

/// Per-pixel visibility weights in `[VISIBILITY_FLOOR, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityMap {
    weights: Tensor,
}

impl VisibilityMap {
    pub fn new(weights: Tensor) -> Result<Self> {
        weights.expect_dims(2, "visibility map")?;
        if weights
            .data()
            .iter()
            .any(|w| !(VISIBILITY_FLOOR..=1.0).contains(w))
        {
            return Err(Error::Shape("visibility weight outside [1e-3, 1]".into()));
        }
        Ok(VisibilityMap { weights })
    }

    pub fn uniform(height: usize, width: usize, weight: f32) -> Result<Self> {
        Self::new(Tensor::full(&[height, width], weight))
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}

/// Smoothed matching scores `D×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedVolume {
    data: Tensor,
}

impl RegularizedVolume {
    pub fn new(data: Tensor) -> Result<Self> {
        data.expect_dims(3, "regularized volume")?;
        if !data.all_finite() {
            return Err(Error::Shape("regularized volume has non-finite entries".into()));
        }
        Ok(RegularizedVolume { data })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn depth_count(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Inner product of each channel group of the reference features with the
/// warped source features. With unit-norm groups this is the cosine.
pub fn groupwise_correlation(
    ref_feat: &Tensor,
    warped: &WarpedFeatures,
    groups: usize,
) -> Result<CostVolume> {
    let rshape = ref_feat.expect_dims(3, "reference features")?;
    let wshape = warped.features.expect_dims(4, "warped features")?;
    let (c, h, w) = (rshape[0], rshape[1], rshape[2]);
    if wshape[0] != c || wshape[2] != h || wshape[3] != w {
        return Err(Error::Shape(format!(
            "reference {rshape:?} vs warped {wshape:?}"
        )));
    }
    if groups == 0 || c % groups != 0 {
        return Err(Error::GroupMismatch {
            channels: c,
            groups,
        });
    }
    let d = wshape[1];
    let plane = h * w;
    let per_group = c / groups;
    let reference = ref_feat.data();
    let src = warped.features.data();
    let mut out = vec![0f32; groups * d * plane];
    for g in 0..groups {
        for j in 0..d {
            let dst = &mut out[(g * d + j) * plane..(g * d + j + 1) * plane];
            for ch in g * per_group..(g + 1) * per_group {
                let r = &reference[ch * plane..(ch + 1) * plane];
                let s = &src[(ch * d + j) * plane..(ch * d + j + 1) * plane];
                for ((o, a), b) in dst.iter_mut().zip(r).zip(s) {
                    *o += a * b;
                }
            }
        }
    }
    CostVolume::new(
        Tensor::new(vec![groups, d, h, w], out)?,
        warped.validity.clone(),
    )
}

/// `1 - H / ln D` of the softmax over valid hypotheses of the group-mean
/// correlation, clamped to `[VISIBILITY_FLOOR, 1]`.
pub fn visibility_weight(vol: &CostVolume) -> VisibilityMap {
    let mean = vol.group_mean();
    let (d, h, w) = (vol.depth_count(), vol.height(), vol.width());
    let plane = h * w;
    let valid = vol.validity.data();
    let log_d = (d as f64).ln();
    let mut weights = vec![VISIBILITY_FLOOR; plane];
    for (p, weight) in weights.iter_mut().enumerate() {
        let column = (0..d).filter(|&j| valid[j * plane + p] > 0.0);
        let max = column
            .clone()
            .map(|j| mean.data()[j * plane + p] as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() || d < 2 {
            continue;
        }
        let exps: Vec<f64> = column
            .map(|j| (mean.data()[j * plane + p] as f64 - max).exp())
            .collect();
        let sum: f64 = exps.iter().sum();
        let entropy: f64 = exps
            .iter()
            .map(|e| e / sum)
            .filter(|&s| s > 0.0)
            .map(|s| -s * s.ln())
            .sum();
        *weight = ((1.0 - entropy / log_d) as f32).clamp(VISIBILITY_FLOOR, 1.0);
    }
    VisibilityMap {
        weights: Tensor::new(vec![h, w], weights).expect("2-D"),
    }
}

/// Visibility-weighted mean of per-view volumes. Entries no view sampled
/// validly are set to [`INVALID_CORRELATION`] with validity 0.
pub fn fuse_volumes(vols: &[CostVolume], weights: &[VisibilityMap]) -> Result<CostVolume> {
    let first = vols.first().ok_or(Error::NotEnoughViews {
        required: 1,
        found: 0,
    })?;
    if weights.len() != vols.len() {
        return Err(Error::Shape(format!(
            "{} volumes but {} visibility maps",
            vols.len(),
            weights.len()
        )));
    }
    let shape = first.data.shape().to_vec();
    for (v, wmap) in vols.iter().zip(weights) {
        if v.data.shape() != shape.as_slice() {
            return Err(Error::Shape(format!(
                "volume {:?} vs {shape:?}",
                v.data.shape()
            )));
        }
        if wmap.weights.shape() != &shape[2..] {
            return Err(Error::Shape(format!(
                "visibility {:?} vs volume {shape:?}",
                wmap.weights.shape()
            )));
        }
    }
    let (g, d, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let plane = h * w;
    let mut out = vec![0f32; g * d * plane];
    let mut validity = vec![0f32; d * plane];
    for j in 0..d {
        for p in 0..plane {
            let vi = j * plane + p;
            let mut total = 0f64;
            for (v, wmap) in vols.iter().zip(weights) {
                if v.validity.data()[vi] > 0.0 {
                    total += wmap.weights.data()[p] as f64;
                }
            }
            if total <= 0.0 {
                for gi in 0..g {
                    out[gi * d * plane + vi] = INVALID_CORRELATION;
                }
                continue;
            }
            validity[vi] = 1.0;
            for gi in 0..g {
                let idx = gi * d * plane + vi;
                let mut acc = 0f64;
                for (v, wmap) in vols.iter().zip(weights) {
                    if v.validity.data()[vi] > 0.0 {
                        acc += wmap.weights.data()[p] as f64 * v.data.data()[idx] as f64;
                    }
                }
                out[idx] = (acc / total) as f32;
            }
        }
    }
    CostVolume::new(Tensor::new(shape, out)?, Tensor::new(vec![d, h, w], validity)?)
}

pub const SMOOTH_SIGMA: f64 = 1.0;
pub const SMOOTH_RADIUS: usize = 2;

/// Normalized Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let taps: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Edge-replicating 1-D convolution along one axis of a 3-D array.
fn smooth_axis(data: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let strides = [dims[1] * dims[2], dims[2], 1];
    let n = dims[axis] as i64;
    let stride = strides[axis];
    let mut out = vec![0f64; data.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let pos = ((idx / stride) % dims[axis]) as i64;
        let base = idx - pos as usize * stride;
        let mut acc = 0f64;
        for (k, tap) in kernel.iter().enumerate() {
            let q = (pos + k as i64 - radius).clamp(0, n - 1) as usize;
            acc += tap * data[base + q * stride];
        }
        *o = acc;
    }
    out
}

/// Group mean followed by separable Gaussian smoothing over depth, rows and
/// columns (sigma 1, radius 2, edge replication).
pub fn regularize(vol: &CostVolume) -> RegularizedVolume {
    let mean = vol.group_mean();
    let dims = [vol.depth_count(), vol.height(), vol.width()];
    smooth_volume(&mean, dims)
}

pub(crate) fn smooth_volume(volume: &Tensor, dims: [usize; 3]) -> RegularizedVolume {
    let kernel = gaussian_kernel(SMOOTH_SIGMA, SMOOTH_RADIUS);
    let mut data: Vec<f64> = volume.data().iter().map(|&v| v as f64).collect();
    for axis in 0..3 {
        data = smooth_axis(&data, dims, axis, &kernel);
    }
    let out = Tensor::new(dims.to_vec(), data.into_iter().map(|v| v as f32).collect())
        .expect("dims match");
    RegularizedVolume { data: out }
}
