//! Plane-sweep multi-view stereo: cameras and warping, feature pyramids,
//! group-wise correlation volumes, coarse-to-fine depth inference, geometric
//! fusion into point clouds, multi-scale training schedules and a synthetic
//! scene generator for evaluation.

pub mod config;
pub mod cost_volume;
pub mod error;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod scheduler;
pub mod synth;
pub mod tensor;

pub use cost_volume::{CostVolume, RegularizedVolume, VisibilityMap};
pub use error::{Error, Result};
pub use features::{FeaturePyramid, GluWeights, VitFeatures};
pub use geometry::{CameraView, DepthHypotheses, RelativePose};
pub use inference::{CascadeSettings, ConfidenceMap, DepthMap, ProbabilityVolume};
pub use io::PointCloud;
pub use rng::XorShift64;
pub use tensor::Tensor;
