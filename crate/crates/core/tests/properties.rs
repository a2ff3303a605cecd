use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

use planesweep::cost_volume::{self, CostVolume, RegularizedVolume};
use planesweep::geometry::{self, CameraView};
use planesweep::inference;
use planesweep::metrics;
use planesweep::scheduler::{self, Variant};
use planesweep::{DepthMap, PointCloud, Tensor, XorShift64};

fn camera(angles: (f64, f64, f64), t: [f64; 3], f: f64) -> CameraView {
    let r = Rotation3::from_euler_angles(angles.0, angles.1, angles.2).into_inner();
    let k = Matrix3::new(f, 0.0, 64.0, 0.0, f, 48.0, 0.0, 0.0, 1.0);
    CameraView::new(k, r, Vector3::from(t), Tensor::zeros(&[2, 2, 3]), 0.5, 50.0).unwrap()
}

fn volume(seed: u64, d: usize, h: usize, w: usize) -> Tensor {
    let mut rng = XorShift64::new(seed);
    Tensor::new(vec![d, h, w], (0..d * h * w).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap()
}

fn row(values: Vec<f32>) -> DepthMap {
    let n = values.len();
    DepthMap::new(Tensor::new(vec![1, n], values).unwrap(), 4).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn warp_agrees_with_project_unproject(
        a in (-0.3f64..0.3, -0.3f64..0.3, -0.3f64..0.3),
        b in (-0.3f64..0.3, -0.3f64..0.3, -0.3f64..0.3),
        t in prop::array::uniform3(-0.5f64..0.5),
        u in 0.0f64..128.0, v in 0.0f64..96.0, d in 1.0f64..30.0,
    ) {
        let (reference, source) = (camera(a, [0.0; 3], 100.0), camera(b, t, 120.0));
        let world = reference.unproject(u, v, d);
        let pose = geometry::relative_pose(&reference, &source);
        if let (Some((x, y)), Some((px, py, _))) = (
            geometry::warp_pixel((u, v), d, reference.k(), source.k(), &pose),
            source.project(&world),
        ) {
            prop_assert!((x - px).abs() < 1e-6 && (y - py).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_columns_sum_to_one(seed in any::<u64>(), t in 0.05f32..50.0) {
        let rv = RegularizedVolume::new(volume(seed, 8, 3, 4)).unwrap();
        let p = inference::probability_volume(&rv, t).unwrap();
        for i in 0..12 {
            let s: f32 = (0..8).map(|j| p.data().data()[j * 12 + i]).sum();
            prop_assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn confidence_grows_with_temperature(seed in any::<u64>(), t in 0.1f32..10.0) {
        let rv = RegularizedVolume::new(volume(seed, 6, 2, 3)).unwrap();
        let lo = inference::probability_volume(&rv, t).unwrap().max_probability();
        let hi = inference::probability_volume(&rv, 2.0 * t).unwrap().max_probability();
        for (a, b) in lo.data().data().iter().zip(hi.data().data()) {
            prop_assert!(b + 1e-6 >= *a);
        }
    }

    #[test]
    fn regularizing_keeps_constant_volumes(c in -1.0f32..1.0) {
        let data = Tensor::full(&[4, 5, 6, 7], c);
        let vol = CostVolume::new(data, Tensor::full(&[5, 6, 7], 1.0)).unwrap();
        let rv = cost_volume::regularize(&vol);
        prop_assert!(rv.data().data().iter().all(|v| (v - c).abs() < 1e-5));
    }

    #[test]
    fn refined_windows_stay_in_range(seed in any::<u64>(), stage in 2usize..=4) {
        let mut rng = XorShift64::new(seed);
        let (h, w) = (3, 4);
        let prev = Tensor::new(vec![h, w], (0..h * w).map(|_| rng.uniform(1.0, 12.0) as f32).collect()).unwrap();
        let prev = DepthMap::new(prev, stage - 1).unwrap();
        let base = (1.0 / 2.0 - 1.0 / 10.0) / 31.0;
        let hyp = geometry::refine_hypotheses(&prev, stage, base, 8, 2.0, 10.0).unwrap();
        for y in 0..hyp.height() {
            for x in 0..hyp.width() {
                for j in 0..hyp.count() {
                    let d = hyp.depth(j, y, x);
                    prop_assert!((2.0 - 1e-4..=10.0 + 1e-3).contains(&d));
                    if j > 0 {
                        prop_assert!(d > hyp.depth(j - 1, y, x));
                    }
                }
            }
        }
    }

    #[test]
    fn error_ratios_ignore_common_offsets(
        pairs in prop::collection::vec((0.5f32..20.0, -10.0f32..10.0), 1..30),
        offset in -5.0f32..5.0,
    ) {
        let gt: Vec<f32> = pairs.iter().map(|p| p.0.round()).collect();
        let pred: Vec<f32> = pairs.iter().zip(&gt).map(|(p, g)| g + p.1.round()).collect();
        // integer-valued data keeps the shifted differences exact
        let offset = offset.round();
        let keep: Vec<bool> = gt.iter().map(|&g| g > 0.0 && g + offset > 0.0).collect();
        let (g0, p0): (Vec<f32>, Vec<f32>) = gt.iter().zip(&pred).zip(&keep).filter(|(_, k)| **k).map(|((g, p), _)| (*g, *p)).unzip();
        prop_assume!(!g0.is_empty());
        let shifted_g: Vec<f32> = g0.iter().map(|g| g + offset).collect();
        let shifted_p: Vec<f32> = p0.iter().map(|p| p + offset).collect();
        let a = metrics::depth_error_ratios(&row(p0), &row(g0), &metrics::DEFAULT_THRESHOLDS).unwrap();
        let b = metrics::depth_error_ratios(&row(shifted_p), &row(shifted_g), &metrics::DEFAULT_THRESHOLDS).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cloud_metrics_are_symmetric(
        a in prop::collection::vec(prop::array::uniform3(-40f32..40.0), 1..25),
        b in prop::collection::vec(prop::array::uniform3(-40f32..40.0), 1..25),
    ) {
        let (pa, pb) = (PointCloud::from_points(a).unwrap(), PointCloud::from_points(b).unwrap());
        let ab = metrics::cloud_metrics(&pa, &pb, 20.0).unwrap();
        let ba = metrics::cloud_metrics(&pb, &pa, 20.0).unwrap();
        prop_assert_eq!((ab.acc, ab.comp, ab.overall), (ba.comp, ba.acc, ba.overall));
        prop_assert!(ab.acc <= 20.0 && ab.comp <= 20.0);
    }

    #[test]
    fn plans_cover_every_sample(n in 1usize..600, seed in any::<u64>(), h in any::<bool>()) {
        let variant = if h { Variant::H } else { Variant::P };
        let patterns = scheduler::default_patterns(variant);
        let plan = scheduler::make_epoch_plan(n, &patterns, 8, seed).unwrap();
        prop_assert!(scheduler::validate_plan(&plan, n, 8).is_empty());
        let text = plan.to_string();
        prop_assert_eq!(text.parse::<scheduler::EpochPlan>().unwrap(), plan);
    }
}
