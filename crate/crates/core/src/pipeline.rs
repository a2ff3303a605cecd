//! End-to-end runs over a scene directory.
//!
//! Layout:
//!
//! ```text
//! views.txt              view ids, one per line, in source-priority order
//! images/<id>.ppm
//! cams/<id>_cam.txt
//! gt/<id>.pfm            optional ground-truth depth
//! gt/cloud.ply           optional ground-truth points
//! vit/<id>_feat.mvtf     optional, with <id>_attn.mvtf and <id>_attn_mean.mvtf
//! depth/<id>.pfm         written by `depth`
//! depth/<id>_conf.pfm
//! cloud.ply              written by `fuse`
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;

use crate::config::{FeatureSource, PipelineConfig};
use crate::cost_volume::{self, CostVolume, RegularizedVolume};
use crate::error::{Error, Result};
use crate::features::{self, FeaturePyramid, GluWeights, VitFeatures};
use crate::fusion::{self, ViewEstimate};
use crate::geometry::{self, CameraView, DepthHypotheses, RelativePose};
use crate::inference::{self, CascadeResult, CascadeSettings, ConfidenceMap, DepthMap};
use crate::io::{self, PointCloud};
use crate::metrics::{self, MetricsReport};
use crate::scheduler::{self, Variant};
use crate::synth;
use crate::tensor::Tensor;

/// Spatial stride of the ViT patch grid relative to the full image.
pub const VIT_STRIDE: usize = 32;
/// Pixel stride used when sampling ground-truth clouds from depth maps.
pub const GT_CLOUD_STRIDE: usize = 4;

pub struct SceneDir {
    root: PathBuf,
    ids: Vec<String>,
}

impl SceneDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let listing = root.join("views.txt");
        let text = fs::read_to_string(&listing).map_err(|e| Error::file(&listing, e))?;
        let ids: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        if ids.is_empty() {
            return Err(Error::Config(format!("{} lists no views", listing.display())));
        }
        Ok(SceneDir { root, ids })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.ids
            .iter()
            .position(|i| i == id)
            .ok_or_else(|| Error::Config(format!("view {id:?} is not listed in views.txt")))
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.root.join("images").join(format!("{id}.ppm"))
    }

    pub fn cam_path(&self, id: &str) -> PathBuf {
        self.root.join("cams").join(format!("{id}_cam.txt"))
    }

    pub fn gt_path(&self, id: &str) -> PathBuf {
        self.root.join("gt").join(format!("{id}.pfm"))
    }

    pub fn depth_path(&self, id: &str) -> PathBuf {
        self.root.join("depth").join(format!("{id}.pfm"))
    }

    pub fn confidence_path(&self, id: &str) -> PathBuf {
        self.root.join("depth").join(format!("{id}_conf.pfm"))
    }

    pub fn cloud_path(&self) -> PathBuf {
        self.root.join("cloud.ply")
    }

    pub fn vit_paths(&self, cfg: &PipelineConfig, id: &str) -> [PathBuf; 3] {
        let dir = self.root.join(&cfg.vit_dir);
        ["feat", "attn", "attn_mean"].map(|k| dir.join(format!("{id}_{k}.mvtf")))
    }

    pub fn load_view(&self, id: &str) -> Result<CameraView> {
        let image = io::read_image(self.image_path(id))?;
        let cam = io::read_cam(self.cam_path(id))?;
        CameraView::from_cam_file(&cam, image)
    }

    pub fn load_views(&self) -> Result<Vec<CameraView>> {
        let views: Vec<CameraView> = self.ids.iter().map(|id| self.load_view(id)).collect::<Result<_>>()?;
        let (h, w) = (views[0].height(), views[0].width());
        if let Some((i, v)) = views.iter().enumerate().find(|(_, v)| (v.height(), v.width()) != (h, w)) {
            return Err(Error::Shape(format!(
                "view {:?} is {}x{}, view {:?} is {h}x{w}",
                self.ids[i],
                v.height(),
                v.width(),
                self.ids[0]
            )));
        }
        Ok(views)
    }

    pub fn load_vit(&self, cfg: &PipelineConfig, id: &str) -> Result<VitFeatures> {
        let [f, a, m] = self.vit_paths(cfg, id);
        VitFeatures::load(f, a, m)
    }

    pub fn load_gt(&self, id: &str) -> Result<DepthMap> {
        DepthMap::new(io::read_pfm(self.gt_path(id))?, 4)
    }
}

/// Reference view first, then up to `count - 1` sources in list order.
pub fn select_views(total: usize, reference: usize, count: usize) -> Vec<usize> {
    std::iter::once(reference)
        .chain((0..total).filter(|&i| i != reference))
        .take(count)
        .collect()
}

/// Precomputed pyramids and cameras for one reference view and its sources.
pub struct PlaneSweep {
    pyramids: Vec<FeaturePyramid>,
    cameras: Vec<CameraView>,
    poses: Vec<RelativePose>,
    groups: usize,
    gain: f32,
    height: usize,
    width: usize,
}

impl PlaneSweep {
    /// `views[0]` is the reference. With `vit` present, each view's pyramid
    /// receives its fused ViT residual at the coarsest level.
    pub fn new(
        cfg: &PipelineConfig,
        views: &[CameraView],
        vit: Option<&[VitFeatures]>,
    ) -> Result<Self> {
        cfg.validate()?;
        if views.len() < 2 {
            return Err(Error::NotEnoughViews {
                required: 2,
                found: views.len(),
            });
        }
        let multiple = if vit.is_some() { VIT_STRIDE } else { 8 };
        let (h, w) = (views[0].height(), views[0].width());
        let mut pyramids = Vec::with_capacity(views.len());
        let glu = vit
            .and_then(|v| v.first())
            .map(|v| GluWeights::seeded(cfg.glu_seed, v.channels(), v.heads(), cfg.glu_channels, cfg.channels));
        for (i, view) in views.iter().enumerate() {
            if (view.height(), view.width()) != (h, w) {
                return Err(Error::Shape(format!(
                    "view {i} is {}x{}, reference is {h}x{w}",
                    view.height(),
                    view.width()
                )));
            }
            let padded = features::pad_to_multiple(view.image(), multiple)?;
            let mut pyr = features::build_pyramid(&padded)?;
            if let (Some(vit), Some(glu)) = (vit, &glu) {
                let v = vit.get(i).ok_or(Error::NotEnoughViews {
                    required: views.len(),
                    found: vit.len(),
                })?;
                let fused = features::glu_fuse(v, glu)?;
                pyr = features::inject_vit(&pyr, &fused, &glu.output)?;
            }
            pyramids.push(pyr.map(|t| features::group_normalize(t, cfg.groups))?);
        }
        let poses = views[1..].iter().map(|s| geometry::relative_pose(&views[0], s)).collect();
        Ok(PlaneSweep {
            pyramids,
            cameras: views.to_vec(),
            poses,
            groups: cfg.groups,
            gain: cfg.volume_gain,
            height: h,
            width: w,
        })
    }

    pub fn reference(&self) -> &CameraView {
        &self.cameras[0]
    }

    /// Padded full-resolution size.
    pub fn padded_size(&self) -> (usize, usize) {
        let s = self.pyramids[0].level(4).shape();
        (s[1], s[2])
    }

    fn stage_k(&self, view: usize, stage: usize) -> Matrix3<f64> {
        let factor = features::LEVEL_FACTORS[stage - 1];
        geometry::scale_intrinsics(self.cameras[view].k(), 1.0 / factor as f64)
    }

    /// Visibility-fused correlation volume of all sources for `hyp`.
    pub fn cost_volume(&self, hyp: &DepthHypotheses) -> Result<CostVolume> {
        let stage = hyp.stage();
        let reference = self.pyramids[0].level(stage);
        let k_ref = self.stage_k(0, stage);
        let mut vols = Vec::with_capacity(self.poses.len());
        let mut weights = Vec::with_capacity(self.poses.len());
        for (i, pose) in self.poses.iter().enumerate() {
            let src = self.pyramids[i + 1].level(stage);
            let warped = geometry::warp_feature(src, hyp, &k_ref, &self.stage_k(i + 1, stage), pose)?;
            let vol = cost_volume::groupwise_correlation(reference, &warped, self.groups)?;
            weights.push(cost_volume::visibility_weight(&vol));
            vols.push(vol);
        }
        cost_volume::fuse_volumes(&vols, &weights)
    }

    /// Smoothed volume scaled by the configured gain.
    pub fn regularized_volume(&self, hyp: &DepthHypotheses) -> Result<RegularizedVolume> {
        let smoothed = cost_volume::regularize(&self.cost_volume(hyp)?);
        RegularizedVolume::new(smoothed.data().map(|v| v * self.gain))
    }

    pub fn cascade_settings(&self, cfg: &PipelineConfig) -> CascadeSettings {
        CascadeSettings {
            hypotheses: cfg.hypotheses,
            temperatures: cfg.temperatures,
            d_min: self.reference().d_min(),
            d_max: self.reference().d_max(),
        }
    }

    /// Stage-1 hypotheses over the reference depth range.
    pub fn initial_hypotheses(&self, cfg: &PipelineConfig) -> Result<DepthHypotheses> {
        let (h, w) = self.padded_size();
        geometry::init_hypotheses(
            self.reference().d_min(),
            self.reference().d_max(),
            cfg.hypotheses[0],
            h / 8,
            w / 8,
        )
    }

    pub fn run(&self, cfg: &PipelineConfig) -> Result<CascadeResult> {
        let (h, w) = self.padded_size();
        inference::staged_inference(&self.cascade_settings(cfg), h / 8, w / 8, |hyp| {
            self.regularized_volume(hyp)
        })
    }

    /// Crops a padded full-resolution map back to the image size.
    pub fn crop(&self, t: &Tensor) -> Result<Tensor> {
        let pw = t.shape()[1];
        let data = (0..self.height)
            .flat_map(|y| t.data()[y * pw..y * pw + self.width].iter().copied())
            .collect();
        Tensor::new(vec![self.height, self.width], data)
    }
}

#[derive(Clone, Debug)]
pub struct DepthEstimate {
    pub depth: DepthMap,
    pub confidence: ConfidenceMap,
    pub cascade: CascadeResult,
}

/// Runs the cascade for `reference` with its `cfg.views - 1` sources.
pub fn estimate_depth(
    cfg: &PipelineConfig,
    views: &[CameraView],
    vit: Option<&[VitFeatures]>,
    reference: usize,
) -> Result<DepthEstimate> {
    let order = select_views(views.len(), reference, cfg.views);
    let chosen: Vec<CameraView> = order.iter().map(|&i| views[i].clone()).collect();
    let chosen_vit: Option<Vec<VitFeatures>> = vit.map(|v| order.iter().map(|&i| v[i].clone()).collect());
    let sweep = PlaneSweep::new(cfg, &chosen, chosen_vit.as_deref())?;
    let cascade = sweep.run(cfg)?;
    let depth = DepthMap::new(sweep.crop(cascade.depth.data())?, 4)?;
    let confidence = ConfidenceMap::new(sweep.crop(cascade.confidence.data())?)?;
    Ok(DepthEstimate {
        depth,
        confidence,
        cascade,
    })
}

fn load_vit_all(cfg: &PipelineConfig, scene: &SceneDir) -> Result<Option<Vec<VitFeatures>>> {
    match cfg.features {
        FeatureSource::Handcrafted => Ok(None),
        FeatureSource::VitFiles => scene
            .ids()
            .iter()
            .map(|id| scene.load_vit(cfg, id))
            .collect::<Result<Vec<_>>>()
            .map(Some),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    Ok(())
}

/// Writes `depth/<id>.pfm` and `depth/<id>_conf.pfm` for one reference view.
pub fn cmd_depth(cfg: &PipelineConfig, scene_dir: impl AsRef<Path>, ref_id: &str) -> Result<DepthEstimate> {
    let scene = SceneDir::open(scene_dir)?;
    let reference = scene.index_of(ref_id)?;
    let views = scene.load_views()?;
    let vit = load_vit_all(cfg, &scene)?;
    let est = estimate_depth(cfg, &views, vit.as_deref(), reference)?;
    let (dp, cp) = (scene.depth_path(ref_id), scene.confidence_path(ref_id));
    ensure_parent(&dp)?;
    io::write_pfm(est.depth.data(), dp)?;
    io::write_pfm(est.confidence.data(), cp)?;
    Ok(est)
}

/// Runs [`cmd_depth`] for every listed view.
pub fn cmd_depth_all(cfg: &PipelineConfig, scene_dir: impl AsRef<Path>) -> Result<()> {
    let scene = SceneDir::open(scene_dir.as_ref())?;
    let views = scene.load_views()?;
    let vit = load_vit_all(cfg, &scene)?;
    for (i, id) in scene.ids().iter().enumerate() {
        let est = estimate_depth(cfg, &views, vit.as_deref(), i)?;
        let dp = scene.depth_path(id);
        ensure_parent(&dp)?;
        io::write_pfm(est.depth.data(), dp)?;
        io::write_pfm(est.confidence.data(), scene.confidence_path(id))?;
    }
    Ok(())
}

/// Fuses all per-view depth maps into `out` (default `cloud.ply`).
pub fn cmd_fuse(cfg: &PipelineConfig, scene_dir: impl AsRef<Path>, out: Option<&Path>) -> Result<PointCloud> {
    cfg.validate()?;
    let scene = SceneDir::open(scene_dir)?;
    let views = scene.load_views()?;
    let estimates = scene
        .ids()
        .iter()
        .zip(views)
        .map(|(id, camera)| {
            let depth = DepthMap::new(io::read_pfm(scene.depth_path(id))?, 4)?;
            let confidence = ConfidenceMap::new(io::read_pfm(scene.confidence_path(id))?)?;
            ViewEstimate::new(depth, confidence, camera)
        })
        .collect::<Result<Vec<_>>>()?;
    let cloud = fusion::fuse_to_cloud(&estimates, &cfg.filter)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| scene.cloud_path());
    ensure_parent(&path)?;
    io::write_ply(&cloud, path)?;
    Ok(cloud)
}

/// Pools depth error ratios over all map pairs and adds cloud metrics.
pub fn cmd_eval(
    pred_depths: &[PathBuf],
    gt_depths: &[PathBuf],
    pred_cloud: &Path,
    gt_cloud: &Path,
) -> Result<MetricsReport> {
    if pred_depths.len() != gt_depths.len() || pred_depths.is_empty() {
        return Err(Error::Config(format!(
            "{} predicted and {} ground-truth depth maps",
            pred_depths.len(),
            gt_depths.len()
        )));
    }
    let (mut pred, mut gt) = (Vec::new(), Vec::new());
    for (p, g) in pred_depths.iter().zip(gt_depths) {
        let (p, g) = (io::read_pfm(p)?, io::read_pfm(g)?);
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!("prediction {:?} vs ground truth {:?}", p.shape(), g.shape())));
        }
        pred.extend_from_slice(p.data());
        gt.extend_from_slice(g.data());
    }
    let n = pred.len();
    let pred = DepthMap::new(Tensor::new(vec![1, n], pred)?, 4)?;
    let gt = DepthMap::new(Tensor::new(vec![1, n], gt)?, 4)?;
    let clouds = metrics::cloud_metrics(&io::read_ply(pred_cloud)?, &io::read_ply(gt_cloud)?, metrics::DEFAULT_CLAMP)?;
    MetricsReport::new(&pred, &gt, clouds)
}

/// Unprojects every `stride`-th pixel with valid depth.
pub fn depth_to_points(view: &CameraView, depth: &DepthMap, stride: usize) -> Vec<[f32; 3]> {
    let mut points = Vec::new();
    for y in (0..depth.height()).step_by(stride) {
        for x in (0..depth.width()).step_by(stride) {
            let d = depth.at(y, x) as f64;
            if d > 0.0 {
                let p = view.unproject(x as f64, y as f64, d);
                points.push([p.x as f32, p.y as f32, p.z as f32]);
            }
        }
    }
    points
}

/// Renders a scene file into a dataset directory, including a ground-truth
/// cloud sampled from the first view.
pub fn cmd_render(spec_path: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<()> {
    let spec = synth::read_scene(spec_path)?;
    let out = out_dir.as_ref();
    let views = spec.write_dataset(out)?;
    let (_, view, depth) = &views[0];
    let cloud = PointCloud::from_points(depth_to_points(view, depth, GT_CLOUD_STRIDE))?;
    io::write_ply(&cloud, out.join("gt").join("cloud.ply"))
}

pub fn cmd_plan(num_samples: usize, variant: Variant, seed: u64) -> Result<String> {
    let plan = scheduler::make_epoch_plan(
        num_samples,
        &scheduler::default_patterns(variant),
        scheduler::DEFAULT_BATCH,
        seed,
    )?;
    Ok(plan.to_string())
}
