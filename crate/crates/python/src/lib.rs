//! Python bindings: tensors cross the boundary as flat lists plus a shape.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;

use planesweep::config::{self, FeatureSource, PipelineConfig};
use planesweep::cost_volume::RegularizedVolume;
use planesweep::fusion::FilterMode;
use planesweep::geometry;
use planesweep::scheduler::{self, Variant};
use planesweep::{inference, io, metrics, pipeline, DepthHypotheses, DepthMap, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Missing(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Error::Io(_) | Error::File { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for planesweep::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Row-major `f32` tensor.
#[pyclass(name = "Tensor", module = "planesweep_py", from_py_object)]
#[derive(Clone)]
pub struct PyTensor {
    inner: planesweep::Tensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f32>) -> PyResult<Self> {
        Ok(PyTensor {
            inner: planesweep::Tensor::new(shape, data).py()?,
        })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

impl From<planesweep::Tensor> for PyTensor {
    fn from(inner: planesweep::Tensor) -> Self {
        PyTensor { inner }
    }
}

/// Pipeline settings; `str()` gives the canonical `key = value` text.
#[pyclass(name = "PipelineConfig", module = "planesweep_py", from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => t.parse().py()?,
            None => PipelineConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: PipelineConfig::load(path).py()?,
        })
    }

    #[getter]
    fn hypotheses(&self) -> [usize; 4] {
        self.inner.hypotheses
    }

    #[getter]
    fn temperatures(&self) -> [f32; 4] {
        self.inner.temperatures
    }

    #[setter]
    fn set_temperatures(&mut self, t: [f32; 4]) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.temperatures = t;
        next.validate().py()?;
        self.inner = next;
        Ok(())
    }

    #[getter]
    fn views(&self) -> usize {
        self.inner.views
    }

    #[getter]
    fn filter_mode(&self) -> String {
        self.inner.filter.mode.to_string()
    }

    #[setter]
    fn set_filter_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.filter.mode = mode.parse::<FilterMode>().py()?;
        Ok(())
    }

    #[getter]
    fn features(&self) -> String {
        self.inner.features.to_string()
    }

    #[setter]
    fn set_features(&mut self, source: &str) -> PyResult<()> {
        self.inner.features = source.parse::<FeatureSource>().py()?;
        Ok(())
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

#[pyfunction]
fn parse_temperatures(text: &str) -> PyResult<[f32; 4]> {
    config::parse_temperatures(text).py()
}

#[pyfunction]
fn read_pfm(path: PathBuf) -> PyResult<PyTensor> {
    Ok(io::read_pfm(path).py()?.into())
}

#[pyfunction]
fn write_pfm(tensor: &PyTensor, path: PathBuf) -> PyResult<()> {
    io::write_pfm(&tensor.inner, path).py()
}

#[pyfunction]
fn read_tensor(path: PathBuf) -> PyResult<PyTensor> {
    Ok(io::read_tensor_file(path).py()?.into())
}

#[pyfunction]
fn write_tensor(tensor: &PyTensor, path: PathBuf) -> PyResult<()> {
    io::write_tensor_file(&tensor.inner, path).py()
}

/// Returns `(points, colors)`; colors are `(r, g, b)` integer tuples.
#[pyfunction]
fn read_ply(path: PathBuf) -> PyResult<(Vec<[f32; 3]>, Vec<(u8, u8, u8)>)> {
    let cloud = io::read_ply(path).py()?;
    let colors = cloud.colors().iter().map(|c| (c[0], c[1], c[2])).collect();
    Ok((cloud.points().to_vec(), colors))
}

#[pyfunction]
#[pyo3(signature = (path, points, colors = None))]
fn write_ply(path: PathBuf, points: Vec<[f32; 3]>, colors: Option<Vec<[u8; 3]>>) -> PyResult<()> {
    let cloud = match colors {
        Some(c) => planesweep::PointCloud::new(points, c),
        None => planesweep::PointCloud::from_points(points),
    }
    .py()?;
    io::write_ply(&cloud, path).py()
}

/// Checks the three ViT export files and returns `(channels, heads, height, width)`.
#[pyfunction]
fn check_vit_files(feat: PathBuf, attn: PathBuf, attn_mean: PathBuf) -> PyResult<(usize, usize, usize, usize)> {
    let v = planesweep::VitFeatures::load(feat, attn, attn_mean).py()?;
    Ok((v.channels(), v.heads(), v.height(), v.width()))
}

/// Maps a reference pixel at `depth` into a source camera given both cam files.
#[pyfunction]
fn warp_pixel(u: f64, v: f64, depth: f64, ref_cam: PathBuf, src_cam: PathBuf) -> PyResult<Option<(f64, f64)>> {
    let blank = planesweep::Tensor::zeros(&[1, 1, 3]);
    let a = planesweep::CameraView::from_cam_file(&io::read_cam(ref_cam).py()?, blank.clone()).py()?;
    let b = planesweep::CameraView::from_cam_file(&io::read_cam(src_cam).py()?, blank).py()?;
    let pose = geometry::relative_pose(&a, &b);
    Ok(geometry::warp_pixel((u, v), depth, a.k(), b.k(), &pose))
}

/// Temperature-scaled depth read-out of a `D×H×W` volume against per-pixel
/// hypotheses of the same shape. Returns `(depth, confidence)`.
#[pyfunction]
fn softmax_depth(volume: &PyTensor, hypotheses: &PyTensor, temperature: f32) -> PyResult<(PyTensor, PyTensor)> {
    let rv = RegularizedVolume::new(volume.inner.clone()).py()?;
    let hyp = DepthHypotheses::new(1, hypotheses.inner.clone(), 0.0).py()?;
    let p = inference::probability_volume(&rv, temperature).py()?;
    let depth = inference::expectation_depth(&p, &hyp).py()?;
    Ok((depth.into_tensor().into(), p.max_probability().into_tensor().into()))
}

fn depth_map(t: &PyTensor) -> PyResult<DepthMap> {
    DepthMap::new(t.inner.clone(), 4).py()
}

#[pyfunction]
#[pyo3(signature = (pred, gt, thresholds = metrics::DEFAULT_THRESHOLDS.to_vec()))]
fn depth_error_ratios(pred: &PyTensor, gt: &PyTensor, thresholds: Vec<f64>) -> PyResult<Vec<f64>> {
    metrics::depth_error_ratios(&depth_map(pred)?, &depth_map(gt)?, &thresholds).py()
}

/// Returns `(acc, comp, overall)`.
#[pyfunction]
#[pyo3(signature = (pred, gt, clamp = metrics::DEFAULT_CLAMP))]
fn cloud_metrics(pred: Vec<[f32; 3]>, gt: Vec<[f32; 3]>, clamp: f64) -> PyResult<(f64, f64, f64)> {
    let pred = planesweep::PointCloud::from_points(pred).py()?;
    let gt = planesweep::PointCloud::from_points(gt).py()?;
    let m = metrics::cloud_metrics(&pred, &gt, clamp).py()?;
    Ok((m.acc, m.comp, m.overall))
}

/// Returns `(depth, confidence)` for one reference view and writes both PFMs.
#[pyfunction]
fn cmd_depth(py: Python<'_>, config: &PyConfig, scene: PathBuf, ref_id: &str) -> PyResult<(PyTensor, PyTensor)> {
    let cfg = config.inner.clone();
    let est = py.detach(|| pipeline::cmd_depth(&cfg, scene, ref_id)).py()?;
    Ok((est.depth.into_tensor().into(), est.confidence.into_tensor().into()))
}

#[pyfunction]
fn cmd_depth_all(py: Python<'_>, config: &PyConfig, scene: PathBuf) -> PyResult<()> {
    let cfg = config.inner.clone();
    py.detach(|| pipeline::cmd_depth_all(&cfg, scene)).py()
}

/// Fuses the scene's depth maps and returns the point count.
#[pyfunction]
#[pyo3(signature = (config, scene, out = None))]
fn cmd_fuse(py: Python<'_>, config: &PyConfig, scene: PathBuf, out: Option<PathBuf>) -> PyResult<usize> {
    let cfg = config.inner.clone();
    let cloud = py.detach(|| pipeline::cmd_fuse(&cfg, scene, out.as_deref())).py()?;
    Ok(cloud.len())
}

/// Returns the report line "e2 e4 e8 acc comp overall".
#[pyfunction]
fn cmd_eval(pred: Vec<PathBuf>, gt: Vec<PathBuf>, pred_cloud: PathBuf, gt_cloud: PathBuf) -> PyResult<String> {
    Ok(pipeline::cmd_eval(&pred, &gt, &pred_cloud, &gt_cloud).py()?.to_string())
}

#[pyfunction]
fn cmd_render(py: Python<'_>, spec: PathBuf, out: PathBuf) -> PyResult<()> {
    py.detach(|| pipeline::cmd_render(spec, out)).py()
}

#[pyfunction]
#[pyo3(signature = (num_samples, variant = "P", seed = 0))]
fn cmd_plan(num_samples: usize, variant: &str, seed: u64) -> PyResult<String> {
    pipeline::cmd_plan(num_samples, variant.parse::<Variant>().py()?, seed).py()
}

/// Groups as `(height, width, sub_batch, steps, samples)`.
#[pyfunction]
#[pyo3(signature = (num_samples, variant = "P", batch = scheduler::DEFAULT_BATCH, seed = 0))]
fn make_epoch_plan(
    num_samples: usize,
    variant: &str,
    batch: usize,
    seed: u64,
) -> PyResult<Vec<(usize, usize, usize, usize, Vec<usize>)>> {
    let patterns = scheduler::default_patterns(variant.parse::<Variant>().py()?);
    let plan = scheduler::make_epoch_plan(num_samples, &patterns, batch, seed).py()?;
    Ok(plan
        .groups
        .into_iter()
        .map(|g| (g.height, g.width, g.sub_batch, g.steps, g.samples))
        .collect())
}

#[pymodule]
pub fn planesweep_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(parse_temperatures, m)?)?;
    m.add_function(wrap_pyfunction!(read_pfm, m)?)?;
    m.add_function(wrap_pyfunction!(write_pfm, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(read_ply, m)?)?;
    m.add_function(wrap_pyfunction!(write_ply, m)?)?;
    m.add_function(wrap_pyfunction!(check_vit_files, m)?)?;
    m.add_function(wrap_pyfunction!(warp_pixel, m)?)?;
    m.add_function(wrap_pyfunction!(softmax_depth, m)?)?;
    m.add_function(wrap_pyfunction!(depth_error_ratios, m)?)?;
    m.add_function(wrap_pyfunction!(cloud_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_depth, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_depth_all, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_eval, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_render, m)?)?;
    m.add_function(wrap_pyfunction!(cmd_plan, m)?)?;
    m.add_function(wrap_pyfunction!(make_epoch_plan, m)?)?;
    Ok(())
}
