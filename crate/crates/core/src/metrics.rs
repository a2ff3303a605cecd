//! Depth error ratios and point-cloud accuracy / completeness.

use std::fmt;

use crate::error::{Error, Result};
use crate::inference::DepthMap;
use crate::io::PointCloud;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [2.0, 4.0, 8.0];
pub const DEFAULT_CLAMP: f64 = 20.0;

/// Fraction of valid ground-truth pixels whose absolute error exceeds each
/// threshold. Pixels with non-positive ground truth are ignored.
pub fn depth_error_ratios(pred: &DepthMap, gt: &DepthMap, thresholds: &[f64]) -> Result<Vec<f64>> {
    if pred.data().shape() != gt.data().shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} and ground truth {:?} differ",
            pred.data().shape(),
            gt.data().shape()
        )));
    }
    let mut exceed = vec![0usize; thresholds.len()];
    let mut valid = 0usize;
    for (&p, &g) in pred.data().data().iter().zip(gt.data().data()) {
        if !(g > 0.0) {
            continue;
        }
        valid += 1;
        let err = (p as f64 - g as f64).abs();
        for (count, &tau) in exceed.iter_mut().zip(thresholds) {
            // a non-finite prediction counts as exceeding every threshold
            if !(err <= tau) {
                *count += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(exceed.into_iter().map(|c| c as f64 / valid as f64).collect())
}

fn sq_dist(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    (0..3).map(|i| (a[i] as f64 - b[i] as f64).powi(2)).sum()
}

/// Mean over `from` of the clamped distance to the nearest point of `to`.
fn mean_nearest(from: &[[f32; 3]], to: &[[f32; 3]], clamp: f64) -> f64 {
    let total: f64 = from
        .iter()
        .map(|p| {
            let best = to.iter().map(|q| sq_dist(p, q)).fold(f64::INFINITY, f64::min);
            best.sqrt().min(clamp)
        })
        .sum();
    total / from.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudMetrics {
    pub acc: f64,
    pub comp: f64,
    pub overall: f64,
}

pub fn cloud_metrics(pred: &PointCloud, gt: &PointCloud, clamp: f64) -> Result<CloudMetrics> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let acc = mean_nearest(pred.points(), gt.points(), clamp);
    let comp = mean_nearest(gt.points(), pred.points(), clamp);
    Ok(CloudMetrics {
        acc,
        comp,
        overall: (acc + comp) / 2.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub e2: f64,
    pub e4: f64,
    pub e8: f64,
    pub acc: f64,
    pub comp: f64,
    pub overall: f64,
    pub valid_pixel_count: usize,
}

impl MetricsReport {
    pub fn new(pred: &DepthMap, gt: &DepthMap, cloud: CloudMetrics) -> Result<Self> {
        let e = depth_error_ratios(pred, gt, &DEFAULT_THRESHOLDS)?;
        let valid_pixel_count = gt.data().data().iter().filter(|&&g| g > 0.0).count();
        Ok(MetricsReport {
            e2: e[0],
            e4: e[1],
            e8: e[2],
            acc: cloud.acc,
            comp: cloud.comp,
            overall: cloud.overall,
            valid_pixel_count,
        })
    }
}

/// `e2 e4 e8 acc comp overall`, six decimals each.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            self.e2, self.e4, self.e8, self.acc, self.comp, self.overall
        )
    }
}
