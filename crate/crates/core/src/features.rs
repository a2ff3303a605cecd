//! Four-level feature pyramids: a handcrafted derivative pyramid plus
//! optional fusion of exported ViT patch features through a gated linear unit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::rng::XorShift64;
use crate::tensor::Tensor;

pub const PYRAMID_CHANNELS: usize = 8;
pub const DEFAULT_GROUPS: usize = 4;
pub const DEFAULT_GLU_CHANNELS: usize = 32;
/// Downsampling factor of each level, coarse to fine.
pub const LEVEL_FACTORS: [usize; 4] = [8, 4, 2, 1];

const VARIANCE_FLOOR: f64 = 1e-8;
const NORM_FLOOR: f32 = 1e-8;

/// Levels `C×H/8×W/8`, `C×H/4×W/4`, `C×H/2×W/2`, `C×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid {
    levels: [Tensor; 4],
}

impl FeaturePyramid {
    pub fn new(levels: [Tensor; 4]) -> Result<Self> {
        let base = levels[3].expect_dims(3, "pyramid level")?.to_vec();
        for (l, t) in levels.iter().enumerate() {
            let s = t.expect_dims(3, "pyramid level")?;
            let f = LEVEL_FACTORS[l];
            if s[0] != base[0] || s[1] * f != base[1] || s[2] * f != base[2] {
                return Err(Error::Shape(format!(
                    "level {} has shape {s:?}, full resolution is {base:?}",
                    l + 1
                )));
            }
            if !t.all_finite() {
                return Err(Error::Shape(format!("level {} has non-finite values", l + 1)));
            }
        }
        Ok(FeaturePyramid { levels })
    }

    /// Level `1..=4`, coarse to fine.
    pub fn level(&self, level: usize) -> &Tensor {
        &self.levels[level - 1]
    }

    pub fn levels(&self) -> &[Tensor; 4] {
        &self.levels
    }

    pub fn map(&self, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Self> {
        FeaturePyramid::new([
            f(&self.levels[0])?,
            f(&self.levels[1])?,
            f(&self.levels[2])?,
            f(&self.levels[3])?,
        ])
    }
}

fn grayscale(image: &Tensor) -> Vec<f32> {
    image
        .data()
        .chunks_exact(3)
        .map(|c| 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2])
        .collect()
}

fn area_downsample(src: &[f32], h: usize, w: usize, factor: usize) -> Vec<f32> {
    if factor == 1 {
        return src.to_vec();
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0f32; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0f64;
            for y in oy * factor..(oy + 1) * factor {
                for x in ox * factor..(ox + 1) * factor {
                    acc += src[y * w + x] as f64;
                }
            }
            out[oy * ow + ox] = (acc * norm) as f32;
        }
    }
    out
}

/// First difference along an axis: central inside, one-sided at the borders.
fn gradient(img: &[f32], h: usize, w: usize, along_x: bool) -> Vec<f32> {
    let n = if along_x { w } else { h };
    let mut out = vec![0f32; h * w];
    if n < 2 {
        return out;
    }
    for y in 0..h {
        for x in 0..w {
            let pos = if along_x { x } else { y };
            let at = |p: usize| if along_x { img[y * w + p] } else { img[p * w + x] };
            out[y * w + x] = if pos == 0 {
                at(1) - at(0)
            } else if pos == n - 1 {
                at(n - 1) - at(n - 2)
            } else {
                0.5 * (at(pos + 1) - at(pos - 1))
            };
        }
    }
    out
}

/// Second difference along an axis; border pixels reuse the nearest interior stencil.
fn second_difference(img: &[f32], h: usize, w: usize, along_x: bool) -> Vec<f32> {
    let n = if along_x { w } else { h };
    let mut out = vec![0f32; h * w];
    if n < 3 {
        return out;
    }
    for y in 0..h {
        for x in 0..w {
            let pos = if along_x { x } else { y };
            let c = pos.clamp(1, n - 2);
            let at = |p: usize| if along_x { img[y * w + p] } else { img[p * w + x] };
            out[y * w + x] = at(c + 1) - 2.0 * at(c) + at(c - 1);
        }
    }
    out
}

fn mixed_difference(img: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0f32; h * w];
    if h < 3 || w < 3 {
        return out;
    }
    for y in 0..h {
        for x in 0..w {
            let (cy, cx) = (y.clamp(1, h - 2), x.clamp(1, w - 2));
            out[y * w + x] = 0.25
                * (img[(cy + 1) * w + cx + 1] - img[(cy - 1) * w + cx + 1]
                    - img[(cy + 1) * w + cx - 1]
                    + img[(cy - 1) * w + cx - 1]);
        }
    }
    out
}

/// 3×3 binomial blur `[1 2 1]/4 ⊗ [1 2 1]/4` with edge replication.
fn smooth3(img: &[f32], h: usize, w: usize) -> Vec<f32> {
    let pass = |src: &[f32], along_x: bool| {
        let mut out = vec![0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                let v = if along_x {
                    let (l, r) = (x.saturating_sub(1), (x + 1).min(w - 1));
                    src[y * w + l] + 2.0 * src[y * w + x] + src[y * w + r]
                } else {
                    let (u, d) = (y.saturating_sub(1), (y + 1).min(h - 1));
                    src[u * w + x] + 2.0 * src[y * w + x] + src[d * w + x]
                };
                out[y * w + x] = 0.25 * v;
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

fn standardize(channel: &mut [f32]) {
    let n = channel.len() as f64;
    let mean = channel.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = channel
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let inv = 1.0 / var.max(VARIANCE_FLOOR).sqrt();
    for v in channel.iter_mut() {
        *v = ((*v as f64 - mean) * inv) as f32;
    }
}

/// The eight raw (unstandardized) channels of one level, in order:
/// intensity, smoothed intensity, ∂x, ∂y, ∂xx, ∂yy, ∂xy, Laplacian.
pub fn raw_channels(gray: &[f32], h: usize, w: usize) -> [Vec<f32>; PYRAMID_CHANNELS] {
    let xx = second_difference(gray, h, w, true);
    let yy = second_difference(gray, h, w, false);
    let lap = xx.iter().zip(&yy).map(|(a, b)| a + b).collect();
    [
        gray.to_vec(),
        smooth3(gray, h, w),
        gradient(gray, h, w, true),
        gradient(gray, h, w, false),
        xx,
        yy,
        mixed_difference(gray, h, w),
        lap,
    ]
}

/// Deterministic 8-channel pyramid of an `H×W×3` image whose sides are
/// multiples of 8. Each channel is standardized over its level.
pub fn build_pyramid(image: &Tensor) -> Result<FeaturePyramid> {
    let shape = image.expect_dims(3, "image")?;
    let (h, w) = (shape[0], shape[1]);
    if shape[2] != 3 {
        return Err(Error::Shape(format!("image must be HxWx3, got {shape:?}")));
    }
    if h % 8 != 0 || w % 8 != 0 {
        return Err(Error::NotDivisible {
            height: h,
            width: w,
            divisor: 8,
        });
    }
    let gray = grayscale(image);
    let levels = LEVEL_FACTORS.map(|f| {
        let (lh, lw) = (h / f, w / f);
        let small = area_downsample(&gray, h, w, f);
        let mut data = Vec::with_capacity(PYRAMID_CHANNELS * lh * lw);
        for mut ch in raw_channels(&small, lh, lw) {
            standardize(&mut ch);
            data.extend(ch);
        }
        Tensor::new(vec![PYRAMID_CHANNELS, lh, lw], data).expect("level shape")
    });
    FeaturePyramid::new(levels)
}

/// Pads an `H×W×3` image on the bottom and right by edge replication so both
/// sides are multiples of `multiple`.
pub fn pad_to_multiple(image: &Tensor, multiple: usize) -> Result<Tensor> {
    let shape = image.expect_dims(3, "image")?;
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let (ph, pw) = (h.div_ceil(multiple) * multiple, w.div_ceil(multiple) * multiple);
    if (ph, pw) == (h, w) {
        return Ok(image.clone());
    }
    let mut data = Vec::with_capacity(ph * pw * c);
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            data.extend_from_slice(&image.data()[(sy * w + sx) * c..(sy * w + sx + 1) * c]);
        }
    }
    Tensor::new(vec![ph, pw, c], data)
}

/// Scales every per-pixel sub-vector of `channels / groups` channels to unit
/// L2 norm. Sub-vectors with norm below `1e-8` become zero.
pub fn group_normalize(feat: &Tensor, groups: usize) -> Result<Tensor> {
    let shape = feat.expect_dims(3, "features")?;
    let (c, plane) = (shape[0], shape[1] * shape[2]);
    if groups == 0 || c % groups != 0 {
        return Err(Error::GroupMismatch {
            channels: c,
            groups,
        });
    }
    let per = c / groups;
    let mut out = feat.data().to_vec();
    for g in 0..groups {
        for p in 0..plane {
            let norm = (0..per)
                .map(|k| out[(g * per + k) * plane + p].powi(2))
                .sum::<f32>()
                .sqrt();
            let scale = if norm < NORM_FLOOR { 0.0 } else { 1.0 / norm };
            for k in 0..per {
                out[(g * per + k) * plane + p] *= scale;
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

/// Patch features and `[CLS]` attention exported from a plain ViT.
#[derive(Clone, Debug, PartialEq)]
pub struct VitFeatures {
    /// `C_v×h×w`
    pub feat: Tensor,
    /// `heads×h×w`, non-negative
    pub attn: Tensor,
    /// `1×h×w`, mean of `attn` over heads
    pub attn_mean: Tensor,
}

const ATTN_MEAN_TOL: f32 = 1e-6;

impl VitFeatures {
    pub fn new(feat: Tensor, attn: Tensor, attn_mean: Tensor) -> Result<Self> {
        let fs = feat.expect_dims(3, "ViT features")?;
        let a = attn.expect_dims(3, "attention")?;
        let m = attn_mean.expect_dims(3, "attention mean")?;
        if fs[1..] != a[1..] || a[1..] != m[1..] || m[0] != 1 {
            return Err(Error::Shape(format!(
                "features {fs:?}, attention {a:?} and mean {m:?} disagree"
            )));
        }
        if attn.data().iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Shape("attention must be non-negative".into()));
        }
        let (heads, plane) = (a[0], a[1] * a[2]);
        for p in 0..plane {
            let mean = (0..heads).map(|k| attn.data()[k * plane + p]).sum::<f32>() / heads as f32;
            if (mean - attn_mean.data()[p]).abs() > ATTN_MEAN_TOL {
                return Err(Error::Shape(format!(
                    "attention mean at pixel {p} is {}, heads average {mean}",
                    attn_mean.data()[p]
                )));
            }
        }
        Ok(VitFeatures {
            feat,
            attn,
            attn_mean,
        })
    }

    pub fn load(
        feat: impl AsRef<Path>,
        attn: impl AsRef<Path>,
        attn_mean: impl AsRef<Path>,
    ) -> Result<Self> {
        Self::new(
            io::read_tensor_file(feat)?,
            io::read_tensor_file(attn)?,
            io::read_tensor_file(attn_mean)?,
        )
    }

    pub fn channels(&self) -> usize {
        self.feat.shape()[0]
    }

    pub fn heads(&self) -> usize {
        self.attn.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.feat.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.feat.shape()[2]
    }
}

/// A dense `out×in` linear map with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(weight: Vec<f32>, bias: Vec<f32>, inputs: usize, outputs: usize) -> Result<Self> {
        if weight.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Shape(format!(
                "linear {inputs}->{outputs} needs {} weights and {outputs} biases",
                inputs * outputs
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite linear weights".into()));
        }
        Ok(Linear {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    /// Uniform weights and biases in `±1/√inputs`, drawn row by row.
    pub fn seeded(rng: &mut XorShift64, inputs: usize, outputs: usize) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| rng.uniform(-bound, bound) as f32)
            .collect();
        let bias = (0..outputs).map(|_| rng.uniform(-bound, bound) as f32).collect();
        Linear {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut weight = vec![0f32; n * n];
        for i in 0..n {
            weight[i * n + i] = 1.0;
        }
        Linear {
            weight,
            bias: vec![0.0; n],
            inputs: n,
            outputs: n,
        }
    }

    pub fn apply(&self, x: &[f32], out: &mut [f32]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>();
        }
    }
}

/// Parameters of the gated fusion and the output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct GluWeights {
    /// `(C_v + heads) → C_p`
    pub left: Linear,
    /// `C_v → C_p`
    pub right: Linear,
    /// `C_p → C`
    pub output: Linear,
}

impl GluWeights {
    pub fn new(left: Linear, right: Linear, output: Linear) -> Result<Self> {
        if left.outputs != right.outputs
            || output.inputs != left.outputs
            || left.inputs <= right.inputs
        {
            return Err(Error::Shape(format!(
                "inconsistent GLU shapes: left {}->{}, right {}->{}, output {}->{}",
                left.inputs, left.outputs, right.inputs, right.outputs, output.inputs, output.outputs
            )));
        }
        Ok(GluWeights {
            left,
            right,
            output,
        })
    }

    /// Weights drawn from [`XorShift64`] in the order left, right, output.
    pub fn seeded(seed: u64, vit_channels: usize, heads: usize, fused: usize, out: usize) -> Self {
        let mut rng = XorShift64::new(seed);
        let left = Linear::seeded(&mut rng, vit_channels + heads, fused);
        let right = Linear::seeded(&mut rng, vit_channels, fused);
        let output = Linear::seeded(&mut rng, fused, out);
        GluWeights {
            left,
            right,
            output,
        }
    }

    pub fn vit_channels(&self) -> usize {
        self.right.inputs
    }

    pub fn heads(&self) -> usize {
        self.left.inputs - self.right.inputs
    }

    /// Flat 1-D layout: `[C_v, heads, C_p, C]` followed by left weight, left
    /// bias, right weight, right bias, output weight, output bias.
    pub fn to_tensor(&self) -> Tensor {
        let mut v = vec![
            self.vit_channels() as f32,
            self.heads() as f32,
            self.left.outputs as f32,
            self.output.outputs as f32,
        ];
        for lin in [&self.left, &self.right, &self.output] {
            v.extend_from_slice(&lin.weight);
            v.extend_from_slice(&lin.bias);
        }
        let n = v.len();
        Tensor::new(vec![n], v).expect("1-D")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        t.expect_dims(1, "GLU weights")?;
        let v = t.data();
        if v.len() < 4 {
            return Err(Error::Truncated {
                expected: 4,
                found: v.len(),
            });
        }
        let dim = |x: f32| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::Shape(format!("bad GLU dimension {x}")))
            }
        };
        let (cv, heads, cp, c) = (dim(v[0])?, dim(v[1])?, dim(v[2])?, dim(v[3])?);
        let mut pos = 4;
        let mut take = |inputs: usize, outputs: usize| -> Result<Linear> {
            let n = inputs * outputs + outputs;
            let chunk = v.get(pos..pos + n).ok_or(Error::Truncated {
                expected: pos + n,
                found: v.len(),
            })?;
            pos += n;
            Linear::new(
                chunk[..inputs * outputs].to_vec(),
                chunk[inputs * outputs..].to_vec(),
                inputs,
                outputs,
            )
        };
        let left = take(cv + heads, cp)?;
        let right = take(cv, cp)?;
        let output = take(cp, c)?;
        if pos != v.len() {
            return Err(Error::Shape(format!("{} trailing GLU values", v.len() - pos)));
        }
        GluWeights::new(left, right, output)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor(&io::read_tensor_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_tensor_file(&self.to_tensor(), path)
    }
}

#[inline]
pub fn swish(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// Per pixel: `swish(left([F; A])) ⊙ swish(right(F · Â))`, `C_p×h×w`.
/// `[F; A]` concatenates features then attention heads; `Â` is broadcast
/// over all feature channels.
pub fn glu_fuse(v: &VitFeatures, w: &GluWeights) -> Result<Tensor> {
    let (cv, heads) = (v.channels(), v.heads());
    if cv != w.vit_channels() || heads != w.heads() {
        return Err(Error::Shape(format!(
            "ViT features have {cv} channels and {heads} heads, weights expect {} and {}",
            w.vit_channels(),
            w.heads()
        )));
    }
    let (h, wd) = (v.height(), v.width());
    let plane = h * wd;
    let cp = w.left.outputs;
    let mut out = vec![0f32; cp * plane];
    let mut concat = vec![0f32; cv + heads];
    let mut gated = vec![0f32; cv];
    let mut left = vec![0f32; cp];
    let mut right = vec![0f32; cp];
    for p in 0..plane {
        let a_hat = v.attn_mean.data()[p];
        for c in 0..cv {
            let f = v.feat.data()[c * plane + p];
            concat[c] = f;
            gated[c] = f * a_hat;
        }
        for k in 0..heads {
            concat[cv + k] = v.attn.data()[k * plane + p];
        }
        w.left.apply(&concat, &mut left);
        w.right.apply(&gated, &mut right);
        for c in 0..cp {
            out[c * plane + p] = swish(left[c]) * swish(right[c]);
        }
    }
    Tensor::new(vec![cp, h, wd], out)
}

/// Applies a 1×1 linear map to every pixel of a `C_in×h×w` tensor.
pub fn project_channels(t: &Tensor, lin: &Linear) -> Result<Tensor> {
    let s = t.expect_dims(3, "feature map")?;
    if s[0] != lin.inputs {
        return Err(Error::Shape(format!(
            "projection expects {} channels, got {}",
            lin.inputs, s[0]
        )));
    }
    let plane = s[1] * s[2];
    let mut out = vec![0f32; lin.outputs * plane];
    let mut x = vec![0f32; lin.inputs];
    let mut y = vec![0f32; lin.outputs];
    for p in 0..plane {
        for c in 0..lin.inputs {
            x[c] = t.data()[c * plane + p];
        }
        lin.apply(&x, &mut y);
        for c in 0..lin.outputs {
            out[c * plane + p] = y[c];
        }
    }
    Tensor::new(vec![lin.outputs, s[1], s[2]], out)
}

/// Bilinear upsampling by an integer factor with half-pixel centers:
/// output pixel `x` samples input coordinate `(x + 0.5) / factor - 0.5`,
/// clamped to the input extent.
pub fn upsample_bilinear(t: &Tensor, factor: usize) -> Result<Tensor> {
    let s = t.expect_dims(3, "feature map")?;
    let (c, h, w) = (s[0], s[1], s[2]);
    let (oh, ow) = (h * factor, w * factor);
    let coord = |o: usize, n: usize| {
        let x = ((o as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = x.floor() as usize;
        (i0, (i0 + 1).min(n - 1), (x - i0 as f64) as f32)
    };
    let mut out = vec![0f32; c * oh * ow];
    for y in 0..oh {
        let (y0, y1, fy) = coord(y, h);
        for x in 0..ow {
            let (x0, x1, fx) = coord(x, w);
            for ch in 0..c {
                let src = &t.data()[ch * h * w..(ch + 1) * h * w];
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                out[(ch * oh + y) * ow + x] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Adds the projected, ×4-upsampled fused ViT map to the coarsest level.
pub fn inject_vit(pyr: &FeaturePyramid, fused: &Tensor, projection: &Linear) -> Result<FeaturePyramid> {
    let level = pyr.level(1);
    let ls = level.shape();
    let fs = fused.expect_dims(3, "fused ViT features")?;
    if fs[1] * 4 != ls[1] || fs[2] * 4 != ls[2] {
        return Err(Error::Shape(format!(
            "fused map {fs:?} must be a quarter of level 1 {ls:?}"
        )));
    }
    if projection.outputs != ls[0] {
        return Err(Error::Shape(format!(
            "projection yields {} channels, level 1 has {}",
            projection.outputs, ls[0]
        )));
    }
    let residual = upsample_bilinear(&project_channels(fused, projection)?, 4)?;
    let sum = level
        .data()
        .iter()
        .zip(residual.data())
        .map(|(a, b)| a + b)
        .collect();
    let mut levels = pyr.levels.clone();
    levels[0] = Tensor::new(ls.to_vec(), sum)?;
    FeaturePyramid::new(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_from_gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor {
        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend([f(y, x); 3]);
            }
        }
        Tensor::new(vec![h, w, 3], data).unwrap()
    }

    fn channel(t: &Tensor, c: usize) -> &[f32] {
        let plane = t.shape()[1] * t.shape()[2];
        &t.data()[c * plane..(c + 1) * plane]
    }

    #[test]
    fn pyramid_shapes() {
        let img = image_from_gray(16, 24, |y, x| ((x * 7 + y * 3) % 5) as f32 / 5.0);
        let pyr = build_pyramid(&img).unwrap();
        assert_eq!(pyr.level(1).shape(), &[8, 2, 3]);
        assert_eq!(pyr.level(2).shape(), &[8, 4, 6]);
        assert_eq!(pyr.level(3).shape(), &[8, 8, 12]);
        assert_eq!(pyr.level(4).shape(), &[8, 16, 24]);
    }

    #[test]
    fn pyramid_rejects_odd_sizes() {
        let img = image_from_gray(12, 16, |_, _| 0.5);
        assert!(matches!(build_pyramid(&img), Err(Error::NotDivisible { .. })));
    }

    #[test]
    fn constant_image_gives_zero_channels() {
        let pyr = build_pyramid(&image_from_gray(16, 16, |_, _| 0.6)).unwrap();
        for level in pyr.levels() {
            assert!(level.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ramp_derivatives() {
        let (h, w) = (8, 16);
        let gray: Vec<f32> = (0..h * w).map(|i| 0.05 * (i % w) as f32).collect();
        let ch = raw_channels(&gray, h, w);
        assert!(ch[2].iter().all(|&v| (v - 0.05).abs() < 1e-6));
        assert!(ch[3].iter().all(|&v| v == 0.0));
        for c in 4..8 {
            assert!(ch[c].iter().all(|&v| v.abs() < 1e-6));
        }
        // the standardized x-gradient of a ramp has only rounding noise left
        let pyr = build_pyramid(&image_from_gray(h, w, |_, x| 0.05 * x as f32)).unwrap();
        assert!(channel(pyr.level(4), 2).iter().all(|&v| v.abs() < 1e-3));
    }

    #[test]
    fn standardized_moments() {
        let mut rng = XorShift64::new(3);
        let data: Vec<f32> = (0..32 * 40 * 3).map(|_| rng.next_f64() as f32).collect();
        let img = Tensor::new(vec![32, 40, 3], data).unwrap();
        let pyr = build_pyramid(&img).unwrap();
        for level in pyr.levels() {
            for c in 0..PYRAMID_CHANNELS {
                let v = channel(level, c);
                let n = v.len() as f64;
                let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
                let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-5, "mean {mean}");
                assert!((var - 1.0).abs() < 1e-3, "var {var}");
            }
        }
    }

    #[test]
    fn pyramid_is_deterministic() {
        let mut rng = XorShift64::new(4);
        let data: Vec<f32> = (0..16 * 16 * 3).map(|_| rng.next_f64() as f32).collect();
        let img = Tensor::new(vec![16, 16, 3], data).unwrap();
        assert_eq!(build_pyramid(&img).unwrap(), build_pyramid(&img).unwrap());
    }

    #[test]
    fn padding_replicates_edges() {
        let img = image_from_gray(5, 3, |y, x| (y * 3 + x) as f32);
        let padded = pad_to_multiple(&img, 8).unwrap();
        assert_eq!(padded.shape(), &[8, 8, 3]);
        assert_eq!(padded.data()[(7 * 8 + 7) * 3], 14.0);
        assert_eq!(padded.data()[(2 * 8 + 5) * 3], 8.0);
    }

    #[test]
    fn group_normalize_cases() {
        // group 0 already unit norm, group 1 zero
        let t = Tensor::new(vec![4, 1, 1], vec![0.6, 0.8, 0.0, 0.0]).unwrap();
        let n = group_normalize(&t, 2).unwrap();
        assert_eq!(n.data(), &[0.6, 0.8, 0.0, 0.0]);
        assert!(matches!(group_normalize(&t, 3), Err(Error::GroupMismatch { .. })));
    }

    #[test]
    fn group_normalize_unit_norms_and_idempotence() {
        let mut rng = XorShift64::new(5);
        let data: Vec<f32> = (0..8 * 5 * 6).map(|_| rng.uniform(-3.0, 3.0) as f32).collect();
        let t = Tensor::new(vec![8, 5, 6], data).unwrap();
        let once = group_normalize(&t, 4).unwrap();
        let twice = group_normalize(&once, 4).unwrap();
        let plane = 30;
        for g in 0..4 {
            for p in 0..plane {
                let norm: f32 = (0..2).map(|k| once.data()[(g * 2 + k) * plane + p].powi(2)).sum::<f32>().sqrt();
                assert!((norm - 1.0).abs() < 1e-5 || norm == 0.0);
            }
        }
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    fn vit(cv: usize, heads: usize, h: usize, w: usize, seed: u64) -> VitFeatures {
        let mut rng = XorShift64::new(seed);
        let plane = h * w;
        let feat: Vec<f32> = (0..cv * plane).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        let attn: Vec<f32> = (0..heads * plane).map(|_| rng.uniform(0.0, 0.1) as f32).collect();
        let mean: Vec<f32> = (0..plane)
            .map(|p| (0..heads).map(|k| attn[k * plane + p]).sum::<f32>() / heads as f32)
            .collect();
        VitFeatures::new(
            Tensor::new(vec![cv, h, w], feat).unwrap(),
            Tensor::new(vec![heads, h, w], attn).unwrap(),
            Tensor::new(vec![1, h, w], mean).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn vit_validation() {
        let v = vit(4, 2, 2, 3, 1);
        let bad_mean = v.attn_mean.map(|x| x + 1e-3);
        assert!(VitFeatures::new(v.feat.clone(), v.attn.clone(), bad_mean).is_err());
        let negative = v.attn.map(|x| -x - 0.1);
        assert!(VitFeatures::new(v.feat.clone(), negative, v.attn_mean.clone()).is_err());
        assert!(VitFeatures::new(Tensor::zeros(&[4, 2, 2]), v.attn.clone(), v.attn_mean.clone()).is_err());
    }

    #[test]
    fn glu_annihilates_without_attention() {
        let mut v = vit(6, 3, 2, 2, 2);
        v.attn = Tensor::zeros(&[3, 2, 2]);
        v.attn_mean = Tensor::zeros(&[1, 2, 2]);
        let mut w = GluWeights::seeded(9, 6, 3, 5, 8);
        w.right.bias = vec![0.0; 5];
        let out = glu_fuse(&v, &w).unwrap();
        assert_eq!(out.shape(), &[5, 2, 2]);
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn glu_scalar_case() {
        // C_v = 1, heads = 1, C_p = 1
        let v = VitFeatures::new(
            Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap(),
            Tensor::new(vec![1, 1, 1], vec![0.5]).unwrap(),
            Tensor::new(vec![1, 1, 1], vec![0.5]).unwrap(),
        )
        .unwrap();
        let w = GluWeights::new(
            Linear::new(vec![0.3, -1.0], vec![0.1], 2, 1).unwrap(),
            Linear::new(vec![1.5], vec![-0.2], 1, 1).unwrap(),
            Linear::identity(1),
        )
        .unwrap();
        // left = 0.3*2 - 1*0.5 + 0.1 = 0.2 ; right = 1.5*(2*0.5) - 0.2 = 1.3
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expected = 0.2 * sig(0.2) * 1.3 * sig(1.3);
        let out = glu_fuse(&v, &w).unwrap();
        assert!((out.data()[0] as f64 - expected).abs() < 1e-6);
        assert!((expected - 0.112340).abs() < 1e-6);
    }

    #[test]
    fn attention_mean_only_gates_the_right_branch() {
        let v = vit(4, 2, 3, 3, 3);
        let mut w = GluWeights::seeded(1, 4, 2, 6, 8);
        let mut doubled = v.clone();
        doubled.attn_mean = v.attn_mean.map(|x| 2.0 * x);
        assert_ne!(glu_fuse(&v, &w).unwrap(), glu_fuse(&doubled, &w).unwrap());
        // with a bias-free linear right branch, doubling Â doubles its input
        w.right.bias = vec![0.0; 6];
        let mut half = w.clone();
        half.right.weight.iter_mut().for_each(|x| *x *= 2.0);
        let a = glu_fuse(&doubled, &w).unwrap();
        let b = glu_fuse(&v, &half).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn glu_is_pixelwise() {
        let v = vit(4, 2, 2, 3, 7);
        let w = GluWeights::seeded(2, 4, 2, 5, 8);
        let out = glu_fuse(&v, &w).unwrap();
        // reverse pixel order of every input
        let rev = |t: &Tensor| {
            let s = t.shape();
            let plane = s[1] * s[2];
            let data: Vec<f32> = t
                .data()
                .chunks_exact(plane)
                .flat_map(|c| c.iter().rev().copied().collect::<Vec<_>>())
                .collect();
            Tensor::new(s.to_vec(), data).unwrap()
        };
        let permuted = VitFeatures::new(rev(&v.feat), rev(&v.attn), rev(&v.attn_mean)).unwrap();
        assert_eq!(glu_fuse(&permuted, &w).unwrap(), rev(&out));
    }

    #[test]
    fn glu_channel_mismatch() {
        let v = vit(4, 2, 2, 2, 1);
        let w = GluWeights::seeded(1, 5, 2, 3, 8);
        assert!(glu_fuse(&v, &w).is_err());
    }

    #[test]
    fn glu_weights_round_trip() {
        let w = GluWeights::seeded(42, 384, 6, 32, 8);
        assert_eq!(GluWeights::from_tensor(&w.to_tensor()).unwrap(), w);
        let bound = 1.0 / (390f32).sqrt();
        assert!(w.left.weight.iter().all(|v| v.abs() <= bound));
        let short = Tensor::new(vec![10], w.to_tensor().data()[..10].to_vec()).unwrap();
        assert!(GluWeights::from_tensor(&short).is_err());
    }

    fn small_pyramid() -> FeaturePyramid {
        let mut rng = XorShift64::new(8);
        let data: Vec<f32> = (0..32 * 32 * 3).map(|_| rng.next_f64() as f32).collect();
        build_pyramid(&Tensor::new(vec![32, 32, 3], data).unwrap()).unwrap()
    }

    #[test]
    fn inject_zero_is_identity() {
        let pyr = small_pyramid();
        let fused = Tensor::zeros(&[8, 1, 1]);
        let mut proj = Linear::identity(8);
        proj.bias = vec![0.0; 8];
        assert_eq!(inject_vit(&pyr, &fused, &proj).unwrap(), pyr);
    }

    #[test]
    fn inject_constant_shift() {
        let pyr = small_pyramid();
        let fused = Tensor::full(&[8, 1, 1], 0.75);
        let out = inject_vit(&pyr, &fused, &Linear::identity(8)).unwrap();
        for (a, b) in out.level(1).data().iter().zip(pyr.level(1).data()) {
            assert!((a - b - 0.75).abs() < 1e-6);
        }
        for l in 2..=4 {
            assert_eq!(out.level(l), pyr.level(l));
        }
    }

    #[test]
    fn inject_residual_matches_independent_upsampling() {
        let mut rng = XorShift64::new(10);
        let data: Vec<f32> = (0..64 * 64 * 3).map(|_| rng.next_f64() as f32).collect();
        let pyr = build_pyramid(&Tensor::new(vec![64, 64, 3], data).unwrap()).unwrap();
        let fused = Tensor::new(vec![5, 2, 2], (0..20).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap();
        let proj = Linear::seeded(&mut rng, 5, 8);
        let out = inject_vit(&pyr, &fused, &proj).unwrap();
        // recompute: project each of the 2x2 pixels, then bilinear x4 with half-pixel centers
        let mut projected = [[[0f64; 2]; 2]; 8];
        for c in 0..8 {
            for y in 0..2 {
                for x in 0..2 {
                    let mut acc = proj.bias[c] as f64;
                    for k in 0..5 {
                        acc += proj.weight[c * 5 + k] as f64 * fused.data()[(k * 2 + y) * 2 + x] as f64;
                    }
                    projected[c][y][x] = acc;
                }
            }
        }
        let lerp_coord = |o: usize| -> (usize, usize, f64) {
            let s = ((o as f64 + 0.5) / 4.0 - 0.5).clamp(0.0, 1.0);
            (0, 1, s)
        };
        for c in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    let (y0, y1, fy) = lerp_coord(y);
                    let (x0, x1, fx) = lerp_coord(x);
                    let p = &projected[c];
                    let expected = (p[y0][x0] * (1.0 - fx) + p[y0][x1] * fx) * (1.0 - fy)
                        + (p[y1][x0] * (1.0 - fx) + p[y1][x1] * fx) * fy;
                    let idx = (c * 8 + y) * 8 + x;
                    let residual = (out.level(1).data()[idx] - pyr.level(1).data()[idx]) as f64;
                    assert!((residual - expected).abs() < 1e-6, "{residual} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn inject_shape_mismatch() {
        let pyr = small_pyramid();
        assert!(inject_vit(&pyr, &Tensor::zeros(&[8, 2, 2]), &Linear::identity(8)).is_err());
        assert!(inject_vit(&pyr, &Tensor::zeros(&[4, 1, 1]), &Linear::identity(4)).is_err());
    }
}
