//! Probability volumes and depth read-out: temperature-scaled expectation,
//! argmax, the coarse-to-fine cascade and the winner-take-all diagnostic.

use crate::cost_volume::{CostVolume, RegularizedVolume};
use crate::error::{Error, Result};
use crate::geometry::{self, DepthHypotheses};
use crate::tensor::Tensor;

/// Per-pixel depth in world units; `0.0` marks an invalid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    data: Tensor,
    stage: usize,
}

impl DepthMap {
    pub fn new(data: Tensor, stage: usize) -> Result<Self> {
        data.expect_dims(2, "depth map")?;
        Ok(DepthMap { data, stage })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data.at2(y, x)
    }
}

/// Per-pixel reliability in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    data: Tensor,
}

impl ConfidenceMap {
    pub fn new(data: Tensor) -> Result<Self> {
        data.expect_dims(2, "confidence map")?;
        if data.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Shape("confidence outside [0, 1]".into()));
        }
        Ok(ConfidenceMap { data })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data.at2(y, x)
    }
}

/// Softmax of the regularized volume along depth, `D×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    data: Tensor,
    temperature: f32,
}

impl ProbabilityVolume {
    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
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

    /// Maximum probability of every column.
    pub fn max_probability(&self) -> ConfidenceMap {
        let (d, plane) = (self.depth_count(), self.height() * self.width());
        let p = self.data.data();
        let data = (0..plane)
            .map(|i| {
                (0..d)
                    .map(|j| p[j * plane + i])
                    .fold(0f32, f32::max)
                    .min(1.0)
            })
            .collect();
        ConfidenceMap::new(Tensor::new(vec![self.height(), self.width()], data).expect("2-D"))
            .expect("probabilities are within [0, 1]")
    }
}

/// Index of the largest entry; ties resolve to the smallest index.
fn argmax(column: impl Iterator<Item = f32>) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (j, v) in column.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    best.map(|(j, _)| j)
}

/// Softmax of one column scaled by `scale`, written into `out`.
fn softmax_column(column: &[f32], scale: f32, out: &mut [f32]) {
    if scale.is_infinite() {
        let hot = argmax(column.iter().copied()).unwrap_or(0);
        for (j, o) in out.iter_mut().enumerate() {
            *o = if j == hot { 1.0 } else { 0.0 };
        }
        return;
    }
    let max = column
        .iter()
        .map(|&c| c * scale)
        .fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0f32;
    for (o, &c) in out.iter_mut().zip(column) {
        *o = (c * scale - max).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

fn softmax_volume(volume: &Tensor, scale: f32) -> Tensor {
    let shape = volume.shape();
    let (d, plane) = (shape[0], shape[1] * shape[2]);
    let src = volume.data();
    let mut out = vec![0f32; src.len()];
    let mut column = vec![0f32; d];
    let mut probs = vec![0f32; d];
    for i in 0..plane {
        for j in 0..d {
            column[j] = src[j * plane + i];
        }
        softmax_column(&column, scale, &mut probs);
        for j in 0..d {
            out[j * plane + i] = probs[j];
        }
    }
    Tensor::new(shape.to_vec(), out).expect("same shape")
}

/// `softmax(volume · t)` along depth. `t = ∞` gives a one-hot column at the
/// (first) maximum.
pub fn probability_volume(rv: &RegularizedVolume, temperature: f32) -> Result<ProbabilityVolume> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidTemperature(temperature));
    }
    Ok(ProbabilityVolume {
        data: softmax_volume(rv.data(), temperature),
        temperature,
    })
}

fn check_hypotheses(p: &ProbabilityVolume, hyp: &DepthHypotheses) -> Result<()> {
    if p.data.shape() != hyp.values().shape() {
        return Err(Error::Shape(format!(
            "probabilities {:?} vs hypotheses {:?}",
            p.data.shape(),
            hyp.values().shape()
        )));
    }
    Ok(())
}

/// `Σ_j d_j · p_j` per pixel.
pub fn expectation_depth(p: &ProbabilityVolume, hyp: &DepthHypotheses) -> Result<DepthMap> {
    check_hypotheses(p, hyp)?;
    let (d, h, w) = (p.depth_count(), p.height(), p.width());
    let plane = h * w;
    let probs = p.data.data();
    let depths = hyp.values().data();
    let data = (0..plane)
        .map(|i| {
            let mut acc = 0f32;
            for j in 0..d {
                acc += depths[j * plane + i] * probs[j * plane + i];
            }
            acc
        })
        .collect();
    DepthMap::new(Tensor::new(vec![h, w], data)?, hyp.stage())
}

/// Depth of the most probable hypothesis; ties go to the smaller index.
pub fn argmax_depth(p: &ProbabilityVolume, hyp: &DepthHypotheses) -> Result<DepthMap> {
    check_hypotheses(p, hyp)?;
    let (d, h, w) = (p.depth_count(), p.height(), p.width());
    let plane = h * w;
    let probs = p.data.data();
    let data = (0..plane)
        .map(|i| {
            let j = argmax((0..d).map(|j| probs[j * plane + i])).unwrap_or(0);
            hyp.values().data()[j * plane + i]
        })
        .collect();
    DepthMap::new(Tensor::new(vec![h, w], data)?, hyp.stage())
}

/// Plain soft-argmin regression over `softmax(volume)`.
pub fn regression_depth(rv: &RegularizedVolume, hyp: &DepthHypotheses) -> Result<DepthMap> {
    let p = ProbabilityVolume {
        data: softmax_volume(rv.data(), 1.0),
        temperature: 1.0,
    };
    expectation_depth(&p, hyp)
}

/// Per-stage result of the cascade.
#[derive(Clone, Debug)]
pub struct StageResult {
    pub hypotheses: DepthHypotheses,
    pub depth: DepthMap,
    /// Maximum probability at this stage's temperature.
    pub confidence: ConfidenceMap,
}

#[derive(Clone, Debug)]
pub struct CascadeResult {
    pub depth: DepthMap,
    pub confidence: ConfidenceMap,
    pub stages: Vec<StageResult>,
}

/// Hypothesis counts, temperatures and depth range of the coarse-to-fine cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeSettings {
    pub hypotheses: [usize; 4],
    pub temperatures: [f32; 4],
    pub d_min: f64,
    pub d_max: f64,
}

/// Runs the four-stage cascade. `volume_for` builds the regularized volume for
/// the hypotheses of each stage (stage 1 at `coarse_height × coarse_width`,
/// doubling per stage). Stage `l` reads depth out with temperature `t^l`;
/// its depth seeds the stage `l+1` window. The final confidence is the
/// stage-4 maximum probability.
pub fn staged_inference(
    settings: &CascadeSettings,
    coarse_height: usize,
    coarse_width: usize,
    mut volume_for: impl FnMut(&DepthHypotheses) -> Result<RegularizedVolume>,
) -> Result<CascadeResult> {
    for &t in &settings.temperatures {
        if !(t > 0.0) {
            return Err(Error::InvalidTemperature(t));
        }
    }
    let first = geometry::init_hypotheses(
        settings.d_min,
        settings.d_max,
        settings.hypotheses[0],
        coarse_height,
        coarse_width,
    )?;
    let base_interval = first.interval();
    let mut stages: Vec<StageResult> = Vec::with_capacity(4);
    let mut hyp = first;
    for stage in 1..=4 {
        if stage > 1 {
            let prev = &stages[stage - 2].depth;
            hyp = geometry::refine_hypotheses(
                prev,
                stage,
                base_interval,
                settings.hypotheses[stage - 1],
                settings.d_min,
                settings.d_max,
            )?;
        }
        let rv = volume_for(&hyp)?;
        if rv.data().shape() != hyp.values().shape() {
            return Err(Error::Shape(format!(
                "stage {stage}: volume {:?} vs hypotheses {:?}",
                rv.data().shape(),
                hyp.values().shape()
            )));
        }
        let p = probability_volume(&rv, settings.temperatures[stage - 1])?;
        let depth = expectation_depth(&p, &hyp)?;
        stages.push(StageResult {
            confidence: p.max_probability(),
            depth,
            hypotheses: hyp.clone(),
        });
    }
    let last = stages.last().expect("four stages");
    Ok(CascadeResult {
        depth: last.depth.clone(),
        confidence: last.confidence.clone(),
        stages,
    })
}

/// Winner-take-all depth of the raw (unsmoothed) volume: per-pixel argmax of
/// the group-mean correlation over valid hypotheses. Pixels without any valid
/// hypothesis get depth 0.
pub fn wta_diagnostic(vol: &CostVolume, hyp: &DepthHypotheses) -> Result<DepthMap> {
    let (d, h, w) = (vol.depth_count(), vol.height(), vol.width());
    if [d, h, w] != *hyp.values().shape() {
        return Err(Error::Shape(format!(
            "volume {:?} vs hypotheses {:?}",
            vol.data().shape(),
            hyp.values().shape()
        )));
    }
    let mean = vol.group_mean();
    let valid = vol.validity().data();
    let plane = h * w;
    let data = (0..plane)
        .map(|i| {
            let mut best: Option<(usize, f32)> = None;
            for j in 0..d {
                if valid[j * plane + i] <= 0.0 {
                    continue;
                }
                let v = mean.data()[j * plane + i];
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            best.map_or(0.0, |(j, _)| hyp.values().data()[j * plane + i])
        })
        .collect();
    DepthMap::new(Tensor::new(vec![h, w], data)?, hyp.stage())
}
