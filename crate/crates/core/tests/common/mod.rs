#![allow(dead_code)]

use std::path::Path;

use planesweep::io;
use planesweep::pipeline::{SceneDir, VIT_STRIDE};
use planesweep::synth::{self, SceneSpec};
use planesweep::{CameraView, DepthMap, Tensor, XorShift64};

pub const HEIGHT: usize = 160;
pub const WIDTH: usize = 192;
/// Depth range of the slanted-plane scene.
pub const SLANTED_RANGE: (f64, f64) = (2.0, 8.0);
/// Depth range of the fronto-parallel scene; stage-1 hypotheses there are
/// 0.85 coarse pixels apart.
pub const FRONTO_RANGE: (f64, f64) = (0.5, 8.0);

/// Five parallel cameras on a plus-shaped rig.
fn rig(baseline: f64, (d_min, d_max): (f64, f64)) -> String {
    let mut s = format!(
        "size {HEIGHT} {WIDTH}\nintrinsics 160 160 95.5 79.5\nrange {d_min} {d_max}\nlight 0.3 -0.5 -1 0.35\n"
    );
    let b = baseline;
    for (id, x, y) in [("v0", 0.0, 0.0), ("v1", b, 0.0), ("v2", -b, 0.0), ("v3", 0.0, b), ("v4", 0.0, -b)] {
        s += &format!("camera {id} {x} {y} 0 {x} {y} 1\n");
    }
    s
}

pub fn slanted_plane() -> SceneSpec {
    let text = rig(2.0, SLANTED_RANGE) + "plane 0 0 4.5 0.35 0.1 -1 noise 7 0.6\n";
    synth::parse_scene(&text).unwrap()
}

pub fn fronto_plane(depth: f64) -> SceneSpec {
    let text = rig(0.7, FRONTO_RANGE) + &format!("plane 0 0 {depth} 0 0 -1 noise 11 0.4\n");
    synth::parse_scene(&text).unwrap()
}

pub struct Rendered {
    pub views: Vec<CameraView>,
    pub gt: Vec<DepthMap>,
}

pub fn render(spec: &SceneSpec) -> Rendered {
    let (views, gt) = spec.render_all().unwrap().into_iter().map(|(_, v, d)| (v, d)).unzip();
    Rendered { views, gt }
}

pub fn gray(image: &Tensor) -> Vec<f32> {
    image
        .data()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect()
}

/// Block mean of a `h×w` plane over `f×f` cells.
pub fn block_mean(plane: &[f32], h: usize, w: usize, f: usize) -> Vec<f32> {
    let (bh, bw) = (h / f, w / f);
    let mut out = vec![0.0; bh * bw];
    for y in 0..bh * f {
        for x in 0..bw * f {
            out[(y / f) * bw + x / f] += plane[y * w + x];
        }
    }
    let n = (f * f) as f32;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Stand-in ViT exports: patch features are fixed random sinusoids of the
/// block-mean brightness, head attention peaks at different brightness levels.
pub fn write_fake_vit(scene: &SceneDir, channels: usize, heads: usize, seed: u64) {
    let dir = scene.root().join("vit");
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = XorShift64::new(seed);
    let coeffs: Vec<(f32, f32)> = (0..channels)
        .map(|_| (rng.uniform(1.0, 8.0) as f32, rng.uniform(0.0, 6.3) as f32))
        .collect();
    for id in scene.ids() {
        let image = io::read_image(scene.image_path(id)).unwrap();
        let (h, w) = (image.shape()[0], image.shape()[1]);
        let g = block_mean(&gray(&image), h, w, VIT_STRIDE);
        let (gh, gw) = (h / VIT_STRIDE, w / VIT_STRIDE);
        let feat: Vec<f32> = coeffs
            .iter()
            .flat_map(|&(a, b)| g.iter().map(move |v| (a * v + b).sin()))
            .collect();
        let mut attn = Vec::with_capacity(heads * g.len());
        for head in 0..heads {
            let centre = head as f32 / heads.max(2) as f32;
            let raw: Vec<f32> = g.iter().map(|v| (-8.0 * (v - centre).powi(2)).exp()).collect();
            let total = raw.iter().sum::<f32>() * 1.25;
            attn.extend(raw.iter().map(|v| v / total));
        }
        let mean: Vec<f32> = (0..g.len())
            .map(|i| (0..heads).map(|k| attn[k * g.len() + i]).sum::<f32>() / heads as f32)
            .collect();
        let save = |name: &str, t: Tensor| io::write_tensor_file(&t, dir.join(format!("{id}_{name}.mvtf"))).unwrap();
        save("feat", Tensor::new(vec![channels, gh, gw], feat).unwrap());
        save("attn", Tensor::new(vec![heads, gh, gw], attn).unwrap());
        save("attn_mean", Tensor::new(vec![1, gh, gw], mean).unwrap());
    }
}

pub fn write_dataset(spec: &SceneSpec, dir: &Path) -> SceneDir {
    spec.write_dataset(dir).unwrap();
    SceneDir::open(dir).unwrap()
}
