//! Ray-cast synthetic scenes with analytic depth, used as ground truth.
//!
//! Scene files are line-oriented; `#` starts a comment:
//!
//! ```text
//! size 160 192
//! intrinsics 160 160 95.5 79.5
//! range 2 8
//! light 0.3 -0.5 -1 0.35
//! camera ref 0 0 0 0 0 4
//! camera left -0.5 0 0 0 0 4
//! plane 0 0 4 0.2 0 -1 noise 7 0.15
//! sphere 0.5 0.2 3.5 0.4 checker 0.1 tint 1 0.6 0.4
//! ```
//!
//! `camera <id> eye target` looks from `eye` toward `target` with image rows
//! running along world +y. Textures are `checker <size>`,
//! `sinusoid <freq_u> <freq_v>` or `noise <seed> <cell>`.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::inference::DepthMap;
use crate::io::{self, CamFile};
use crate::tensor::Tensor;

const RAY_EPS: f64 = 1e-9;
/// Hypothesis count written to camera files.
pub const CAM_DEPTH_NUM: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub enum Texture {
    Checker { size: f64 },
    Sinusoid { freq_u: f64, freq_v: f64 },
    Noise { seed: u64, cell: f64 },
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, octave: u64, i: i64, j: i64) -> f64 {
    let h = mix64(seed ^ mix64(octave ^ mix64((i as u64) ^ mix64(j as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, octave: u64, u: f64, v: f64) -> f64 {
    let (fu, fv) = (u.floor(), v.floor());
    let (i, j) = (fu as i64, fv as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (su, sv) = (smooth(u - fu), smooth(v - fv));
    let a = lattice(seed, octave, i, j) * (1.0 - su) + lattice(seed, octave, i + 1, j) * su;
    let b = lattice(seed, octave, i, j + 1) * (1.0 - su) + lattice(seed, octave, i + 1, j + 1) * su;
    a * (1.0 - sv) + b * sv
}

impl Texture {
    /// Texture value in `[0, 1]` at surface coordinates `(u, v)`.
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            Texture::Checker { size } => {
                let parity = ((u / size).floor() + (v / size).floor()).rem_euclid(2.0);
                if parity < 1.0 { 0.15 } else { 0.85 }
            }
            Texture::Sinusoid { freq_u, freq_v } => {
                let tau = std::f64::consts::TAU;
                0.5 + 0.25 * (tau * freq_u * u).sin() + 0.25 * (tau * freq_v * v).sin()
            }
            Texture::Noise { seed, cell } => {
                // three octaves with weights 4:2:1
                let mut acc = 0.0;
                for (o, weight) in [(0u64, 4.0), (1, 2.0), (2, 1.0)] {
                    let scale = (1u64 << o) as f64 / cell;
                    acc += weight * value_noise(seed, o, u * scale, v * scale);
                }
                acc / 7.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Plane { point: Vector3<f64>, normal: Vector3<f64> },
    Sphere { center: Vector3<f64>, radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub texture: Texture,
    pub tint: [f64; 3],
}

impl Primitive {
    pub fn plane(point: Vector3<f64>, normal: Vector3<f64>, texture: Texture) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0) {
            return Err(Error::Config("plane normal must be non-zero".into()));
        }
        Ok(Primitive {
            shape: Shape::Plane {
                point,
                normal: normal / n,
            },
            texture,
            tint: [1.0; 3],
        })
    }

    pub fn sphere(center: Vector3<f64>, radius: f64, texture: Texture) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config("sphere radius must be positive".into()));
        }
        Ok(Primitive {
            shape: Shape::Sphere { center, radius },
            texture,
            tint: [1.0; 3],
        })
    }

    /// Smallest ray parameter `s > 0` with `origin + s·dir` on the surface.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match &self.shape {
            Shape::Plane { point, normal } => {
                let denom = normal.dot(dir);
                if denom.abs() < RAY_EPS {
                    return None;
                }
                let s = normal.dot(&(point - origin)) / denom;
                (s > RAY_EPS).then_some(s)
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let b = oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                [(-b - root) / a, (-b + root) / a].into_iter().find(|&s| s > RAY_EPS)
            }
        }
    }

    fn normal_at(&self, x: &Vector3<f64>) -> Vector3<f64> {
        match &self.shape {
            Shape::Plane { normal, .. } => *normal,
            Shape::Sphere { center, .. } => (x - center).normalize(),
        }
    }

    fn surface_coords(&self, x: &Vector3<f64>) -> (f64, f64) {
        match &self.shape {
            Shape::Plane { point, normal } => {
                let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                let e1 = (helper - normal * normal.dot(&helper)).normalize();
                let e2 = normal.cross(&e1);
                let d = x - point;
                (d.dot(&e1), d.dot(&e2))
            }
            Shape::Sphere { center, radius } => {
                let d = (x - center) / *radius;
                let phi = d.z.atan2(d.x);
                let theta = d.y.clamp(-1.0, 1.0).acos();
                (radius * phi, radius * theta)
            }
        }
    }
}

/// Directional light; `direction` points from surfaces toward the light.
#[derive(Clone, Debug, PartialEq)]
pub struct Light {
    pub direction: Vector3<f64>,
    pub ambient: f64,
}

impl Default for Light {
    fn default() -> Self {
        Light {
            direction: Vector3::new(0.3, -0.5, -1.0).normalize(),
            ambient: 0.35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub light: Light,
}

/// World-to-camera rotation and translation for a camera at `eye` looking
/// at `target`, image rows along world +y.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let z = target - eye;
    if !(z.norm() > 0.0) {
        return Err(Error::Config("camera eye and target coincide".into()));
    }
    let z = z.normalize();
    let x = z.cross(&Vector3::new(0.0, -1.0, 0.0));
    if x.norm() < 1e-9 {
        return Err(Error::Config("camera looks straight along the y axis".into()));
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Ok((r, -(r * eye)))
}

/// Sub-pixel samples per axis averaged into each pixel's color.
pub const SUPERSAMPLE: usize = 3;

fn trace<'a>(scene: &'a Scene, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, &'a Primitive)> {
    scene
        .primitives
        .iter()
        .filter_map(|p| p.intersect(origin, dir).map(|s| (s, p)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

fn shade(scene: &Scene, origin: &Vector3<f64>, dir: &Vector3<f64>) -> [f64; 3] {
    let Some((s, prim)) = trace(scene, origin, dir) else {
        return [0.0; 3];
    };
    let point = origin + dir * s;
    let mut n = prim.normal_at(&point);
    if n.dot(dir) > 0.0 {
        n = -n;
    }
    let (u, v) = prim.surface_coords(&point);
    let albedo = prim.texture.eval(u, v).clamp(0.0, 1.0);
    let light = scene.light.direction.normalize();
    let lit = scene.light.ambient + (1.0 - scene.light.ambient) * n.dot(&light).max(0.0);
    prim.tint.map(|c| (albedo * lit * c).clamp(0.0, 1.0))
}

/// Ray-casts `scene` through `cam`, returning an `H×W×3` image and
/// camera-frame z depth (`0` where nothing is hit). Depth comes from the
/// ray through the pixel center; color averages a
/// `SUPERSAMPLE × SUPERSAMPLE` grid over the pixel footprint.
pub fn render(scene: &Scene, cam: &CameraView) -> (Tensor, DepthMap) {
    let (h, w) = (cam.height(), cam.width());
    let k_inv = cam.k().try_inverse().expect("validated intrinsics are invertible");
    let rt = cam.r().transpose();
    let origin = cam.center();
    // camera-frame directions with unit z, so the ray parameter is the depth
    let ray = |u: f64, v: f64| rt * (k_inv * Vector3::new(u, v, 1.0));
    let offsets: Vec<f64> = (0..SUPERSAMPLE)
        .map(|i| (i as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5)
        .collect();
    let norm = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut image = vec![0f32; h * w * 3];
    let mut depth = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if let Some((s, _)) = trace(scene, &origin, &ray(x as f64, y as f64)) {
                depth[i] = s as f32;
            }
            let mut color = [0f64; 3];
            for dy in &offsets {
                for dx in &offsets {
                    let c = shade(scene, &origin, &ray(x as f64 + dx, y as f64 + dy));
                    for k in 0..3 {
                        color[k] += c[k];
                    }
                }
            }
            for k in 0..3 {
                image[i * 3 + k] = (color[k] * norm) as f32;
            }
        }
    }
    (
        Tensor::new(vec![h, w, 3], image).expect("image shape"),
        DepthMap::new(Tensor::new(vec![h, w], depth).expect("depth shape"), 4).expect("2-D"),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub k: Matrix3<f64>,
    pub d_min: f64,
    pub d_max: f64,
    pub cameras: Vec<(String, Vector3<f64>, Vector3<f64>)>,
    pub scene: Scene,
}

impl SceneSpec {
    /// A camera view with a blank image for the camera named `id`.
    pub fn camera(&self, index: usize) -> Result<CameraView> {
        let (_, eye, target) = &self.cameras[index];
        let (r, t) = look_at(*eye, *target)?;
        CameraView::new(
            self.k,
            r,
            t,
            Tensor::zeros(&[self.height, self.width, 3]),
            self.d_min,
            self.d_max,
        )
    }

    /// Rendered view and ground-truth depth for every camera, in file order.
    pub fn render_all(&self) -> Result<Vec<(String, CameraView, DepthMap)>> {
        (0..self.cameras.len())
            .map(|i| {
                let blank = self.camera(i)?;
                let (image, depth) = render(&self.scene, &blank);
                Ok((self.cameras[i].0.clone(), blank.with_image(image)?, depth))
            })
            .collect()
    }

    pub fn cam_file(&self, view: &CameraView) -> CamFile {
        CamFile {
            k: *view.k(),
            r: *view.r(),
            t: *view.t(),
            d_min: self.d_min,
            d_interval: (self.d_max - self.d_min) / (CAM_DEPTH_NUM - 1) as f64,
            d_num: CAM_DEPTH_NUM as f64,
            d_max: self.d_max,
        }
    }

    /// Writes `views.txt`, `images/<id>.ppm`, `cams/<id>_cam.txt` and
    /// `gt/<id>.pfm` under `dir`, returning the rendered views.
    pub fn write_dataset(&self, dir: impl AsRef<Path>) -> Result<Vec<(String, CameraView, DepthMap)>> {
        let dir = dir.as_ref();
        for sub in ["images", "cams", "gt"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::file(&p, e))?;
        }
        let mut listing = String::new();
        let views = self.render_all()?;
        for (id, view, depth) in &views {
            io::write_ppm(view.image(), dir.join("images").join(format!("{id}.ppm")))?;
            io::write_cam(&self.cam_file(view), dir.join("cams").join(format!("{id}_cam.txt")))?;
            io::write_pfm(depth.data(), dir.join("gt").join(format!("{id}.pfm")))?;
            listing.push_str(id);
            listing.push('\n');
        }
        let p = dir.join("views.txt");
        fs::write(&p, listing).map_err(|e| Error::file(&p, e))?;
        Ok(views)
    }
}

struct Fields<'a> {
    line: usize,
    items: std::slice::Iter<'a, &'a str>,
}

impl<'a> Fields<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn word(&mut self, what: &str) -> Result<&'a str> {
        self.items.next().copied().ok_or_else(|| self.err(format!("missing {what}")))
    }

    fn num(&mut self, what: &str) -> Result<f64> {
        let s = self.word(what)?;
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(format!("{what}: {s:?} is not a finite number")))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let s = self.word(what)?;
        s.parse::<usize>().map_err(|_| self.err(format!("{what}: {s:?} is not a count")))
    }

    fn vec3(&mut self, what: &str) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.num(what)?, self.num(what)?, self.num(what)?))
    }

    fn texture(&mut self) -> Result<Texture> {
        let tex = match self.word("texture")? {
            "checker" => Texture::Checker {
                size: self.num("checker size")?,
            },
            "sinusoid" => Texture::Sinusoid {
                freq_u: self.num("u frequency")?,
                freq_v: self.num("v frequency")?,
            },
            "noise" => {
                let s = self.word("noise seed")?;
                let seed = s.parse::<u64>().map_err(|_| self.err(format!("bad seed {s:?}")))?;
                Texture::Noise {
                    seed,
                    cell: self.num("noise cell size")?,
                }
            }
            other => return Err(self.err(format!("unknown texture {other:?}"))),
        };
        match tex {
            Texture::Checker { size: v } | Texture::Noise { cell: v, .. } if !(v > 0.0) => {
                Err(self.err("texture scale must be positive"))
            }
            t => Ok(t),
        }
    }

    fn finish(&mut self) -> Result<()> {
        match self.items.next() {
            Some(extra) => Err(self.err(format!("unexpected {extra:?}"))),
            None => Ok(()),
        }
    }
}

pub fn parse_scene(text: &str) -> Result<SceneSpec> {
    let mut size = None;
    let mut k = None;
    let mut range = None;
    let mut light = Light::default();
    let mut cameras = Vec::new();
    let mut primitives = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let Some((&head, rest)) = tokens.split_first() else {
            continue;
        };
        let mut f = Fields {
            line: n + 1,
            items: rest.iter(),
        };
        match head {
            "size" => size = Some((f.count("height")?, f.count("width")?)),
            "intrinsics" => {
                let (fx, fy, cx, cy) = (f.num("fx")?, f.num("fy")?, f.num("cx")?, f.num("cy")?);
                if !(fx > 0.0 && fy > 0.0) {
                    return Err(f.err("focal lengths must be positive"));
                }
                k = Some(Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0));
            }
            "range" => {
                let (lo, hi) = (f.num("d_min")?, f.num("d_max")?);
                if !(lo > 0.0 && lo < hi) {
                    return Err(f.err(format!("invalid depth range {lo} {hi}")));
                }
                range = Some((lo, hi));
            }
            "light" => {
                let direction = f.vec3("light direction")?;
                if !(direction.norm() > 0.0) {
                    return Err(f.err("light direction must be non-zero"));
                }
                light = Light {
                    direction: direction.normalize(),
                    ambient: f.num("ambient")?.clamp(0.0, 1.0),
                };
            }
            "camera" => {
                let id = f.word("camera id")?;
                if cameras.iter().any(|(c, _, _)| c == id) {
                    return Err(f.err(format!("duplicate camera {id:?}")));
                }
                let (eye, target) = (f.vec3("eye")?, f.vec3("target")?);
                look_at(eye, target).map_err(|e| f.err(e.to_string()))?;
                cameras.push((id.to_string(), eye, target));
            }
            "plane" | "sphere" => {
                let mut prim = if head == "plane" {
                    let (point, normal) = (f.vec3("point")?, f.vec3("normal")?);
                    let tex = f.texture()?;
                    Primitive::plane(point, normal, tex)
                } else {
                    let (center, radius) = (f.vec3("center")?, f.num("radius")?);
                    let tex = f.texture()?;
                    Primitive::sphere(center, radius, tex)
                }
                .map_err(|e| f.err(e.to_string()))?;
                match f.items.next() {
                    Some(&"tint") => {
                        prim.tint = [f.num("tint")?, f.num("tint")?, f.num("tint")?];
                        if prim.tint.iter().any(|c| !(0.0..=1.0).contains(c)) {
                            return Err(f.err("tint components must lie in [0, 1]"));
                        }
                    }
                    Some(other) => return Err(f.err(format!("unexpected {other:?}"))),
                    None => {}
                }
                primitives.push(prim);
            }
            other => return Err(f.err(format!("unknown directive {other:?}"))),
        }
        f.finish()?;
    }
    let missing = |what: &'static str| Error::MissingSection(what);
    let (height, width) = size.ok_or(missing("size"))?;
    let (d_min, d_max) = range.ok_or(missing("range"))?;
    if cameras.is_empty() {
        return Err(missing("camera"));
    }
    Ok(SceneSpec {
        height,
        width,
        k: k.ok_or(missing("intrinsics"))?,
        d_min,
        d_max,
        cameras,
        scene: Scene { primitives, light },
    })
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<SceneSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_scene(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64;

    fn pinhole(h: usize, w: usize, f: f64) -> Matrix3<f64> {
        Matrix3::new(f, 0.0, (w as f64 - 1.0) / 2.0, 0.0, f, (h as f64 - 1.0) / 2.0, 0.0, 0.0, 1.0)
    }

    fn view(eye: Vector3<f64>, target: Vector3<f64>, h: usize, w: usize) -> CameraView {
        let (r, t) = look_at(eye, target).unwrap();
        CameraView::new(pinhole(h, w, 40.0), r, t, Tensor::zeros(&[h, w, 3]), 0.5, 20.0).unwrap()
    }

    fn one(prim: Primitive) -> Scene {
        Scene {
            primitives: vec![prim],
            light: Light::default(),
        }
    }

    #[test]
    fn look_at_forward_is_identity() {
        let (r, t) = look_at(Vector3::zeros(), Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert!((r - Matrix3::identity()).norm() < 1e-12);
        assert_eq!(t, Vector3::zeros());
        assert!(look_at(Vector3::zeros(), Vector3::new(0.0, 3.0, 0.0)).is_err());
    }

    #[test]
    fn fronto_parallel_plane_depth_is_constant() {
        let scene = one(Primitive::plane(Vector3::new(0.0, 0.0, 3.0), Vector3::z(), Texture::Checker { size: 0.2 }).unwrap());
        let cam = view(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0), 12, 16);
        let (image, depth) = render(&scene, &cam);
        assert!(depth.data().data().iter().all(|&d| (d - 3.0).abs() < 1e-6));
        assert!(image.data().iter().all(|&c| (0.0..=1.0).contains(&c)));
    }

    #[test]
    fn on_axis_sphere_depth() {
        let scene = one(Primitive::sphere(Vector3::new(0.0, 0.0, 5.0), 0.3, Texture::Sinusoid { freq_u: 1.0, freq_v: 2.0 }).unwrap());
        // odd sizes put the principal point on a pixel center
        let cam = view(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0), 11, 11);
        let (_, depth) = render(&scene, &cam);
        assert!((depth.at(5, 5) - 4.7).abs() < 1e-6);
        assert_eq!(depth.at(0, 0), 0.0);
    }

    #[test]
    fn background_is_black_with_zero_depth() {
        let scene = one(Primitive::sphere(Vector3::new(0.0, 0.0, -5.0), 1.0, Texture::Checker { size: 1.0 }).unwrap());
        let cam = view(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0), 6, 6);
        let (image, depth) = render(&scene, &cam);
        assert!(image.data().iter().all(|&c| c == 0.0));
        assert!(depth.data().data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn random_planes_satisfy_their_equation() {
        let mut rng = XorShift64::new(21);
        for _ in 0..20 {
            let point = Vector3::new(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(3.0, 6.0));
            let normal = Vector3::new(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), -1.0);
            let prim = Primitive::plane(point, normal, Texture::Noise { seed: 3, cell: 0.3 }).unwrap();
            let Shape::Plane { normal: n, .. } = prim.shape else { unreachable!() };
            let eye = Vector3::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0);
            let cam = view(eye, point, 10, 14);
            let (_, depth) = render(&one(prim), &cam);
            for y in 0..10 {
                for x in 0..14 {
                    let d = depth.at(y, x) as f64;
                    if d == 0.0 {
                        continue;
                    }
                    let world = cam.unproject(x as f64, y as f64, d);
                    // depth is stored as f32, so the residual scales with its rounding
                    assert!((n.dot(&world) - n.dot(&point)).abs() < 1e-5 * d.max(1.0), "residual");
                }
            }
        }
    }

    #[test]
    fn nearest_primitive_wins() {
        let mut scene = one(Primitive::plane(Vector3::new(0.0, 0.0, 6.0), Vector3::z(), Texture::Checker { size: 1.0 }).unwrap());
        scene.primitives.push(Primitive::sphere(Vector3::new(0.0, 0.0, 4.0), 0.5, Texture::Checker { size: 1.0 }).unwrap());
        let cam = view(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0), 11, 11);
        let (_, depth) = render(&scene, &cam);
        assert!((depth.at(5, 5) - 3.5).abs() < 1e-6);
        assert!((depth.at(0, 0) - 6.0).abs() < 1e-6);
    }

    #[test]
    fn textures_stay_in_unit_range_and_are_deterministic() {
        let mut rng = XorShift64::new(5);
        let textures = [
            Texture::Checker { size: 0.3 },
            Texture::Sinusoid { freq_u: 3.0, freq_v: 1.5 },
            Texture::Noise { seed: 9, cell: 0.25 },
        ];
        for _ in 0..2000 {
            let (u, v) = (rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0));
            for t in &textures {
                let a = t.eval(u, v);
                assert!((0.0..=1.0).contains(&a));
                assert_eq!(a, t.eval(u, v));
            }
        }
        let other = Texture::Noise { seed: 10, cell: 0.25 };
        assert_ne!(textures[2].eval(0.37, 0.81), other.eval(0.37, 0.81));
    }

    const SPEC: &str = "\
# two views of a plane
size 8 16
intrinsics 20 20 7.5 3.5
range 1 10
camera a 0 0 0 0 0 5
camera b 0.5 0 0 0.5 0 5
plane 0 0 5 0 0 -1 noise 4 0.5
sphere 0 0 4 0.5 checker 0.2 tint 1 0.5 0.5
";

    #[test]
    fn parses_a_scene() {
        let spec = parse_scene(SPEC).unwrap();
        assert_eq!((spec.height, spec.width), (8, 16));
        assert_eq!(spec.cameras.len(), 2);
        assert_eq!(spec.scene.primitives.len(), 2);
        assert_eq!(spec.scene.primitives[1].tint, [1.0, 0.5, 0.5]);
        let views = spec.render_all().unwrap();
        assert_eq!(views[1].0, "b");
        assert!((views[1].2.at(0, 0) - 5.0).abs() < 1e-5);
    }

    #[test]
    fn parse_errors_report_lines() {
        let bad = SPEC.replace("checker 0.2", "marble 0.2");
        assert!(matches!(parse_scene(&bad), Err(Error::Parse { line: 8, .. })));
        let bad = SPEC.replace("range 1 10", "range 10 1");
        assert!(matches!(parse_scene(&bad), Err(Error::Parse { line: 4, .. })));
        let bad = SPEC.replace("camera b", "camera a");
        assert!(matches!(parse_scene(&bad), Err(Error::Parse { line: 6, .. })));
        let bad = SPEC.replace("size 8 16", "size 8 16 3");
        assert!(matches!(parse_scene(&bad), Err(Error::Parse { line: 2, .. })));
        let bad = SPEC.replace("size 8 16\n", "");
        assert!(matches!(parse_scene(&bad), Err(Error::MissingSection("size"))));
    }

    #[test]
    fn dataset_layout() {
        let dir = tempfile::tempdir().unwrap();
        let spec = parse_scene(SPEC).unwrap();
        spec.write_dataset(dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("views.txt")).unwrap(), "a\nb\n");
        let cam = io::read_cam(dir.path().join("cams/b_cam.txt")).unwrap();
        assert_eq!(cam.d_num, 32.0);
        let gt = io::read_pfm(dir.path().join("gt/a.pfm")).unwrap();
        assert_eq!(gt.shape(), &[8, 16]);
        assert_eq!(io::read_image(dir.path().join("images/a.ppm")).unwrap().shape(), &[8, 16, 3]);
    }
}
