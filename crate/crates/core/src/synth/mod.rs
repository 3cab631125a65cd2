//! Deterministic synthetic scenes: box-shaped objects on a floor, a camera
//! trajectory, and ideal or noisy detections rendered from it.

mod oracle;
mod render;
mod scene;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, GroundTruthScene};
use crate::fusion::FusionError;
use crate::graph::ClassVocabulary;
use crate::io::{CameraRecord, PoseRecord};

pub use oracle::mixture_moment_oracle;
pub use render::{project_box, render_frames, BoxProjection, RenderedStream};
pub use scene::{generate_scene, relation_between};
pub use sweep::{format_sweep_table, run_synthetic, sweep, SweepRow, SyntheticRun};

pub const PREDICATE_ON: usize = 0;
pub const PREDICATE_NEAR: usize = 1;
pub const PREDICATE_ABOVE: usize = 2;
pub const PREDICATE_UNDER: usize = 3;
pub const PREDICATES: [&str; 4] = ["on", "near", "above", "under"];

const CLASS_NAMES: [&str; 12] =
    ["chair", "table", "sofa", "bed", "cabinet", "lamp", "shelf", "box", "desk", "plant", "monitor", "bin"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("could not place object {placed} of {requested} after bounded retries")]
    Infeasible { placed: usize, requested: usize },
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Per-detection corruption applied while rendering. All zero is the identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of the bbox center and size perturbation, pixels.
    pub bbox_jitter_px: f64,
    /// Standard deviation of the additive centroid depth error, meters.
    pub depth_sigma: f64,
    /// Chance that each true detection is accompanied by a spurious one.
    pub false_positive_rate: f64,
    pub miss_rate: f64,
    pub class_flip_rate: f64,
    /// Chance that an emitted relation carries a different, random predicate.
    pub predicate_flip_rate: f64,
}

impl NoiseModel {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Poses on a circle around the room, looking at its center.
    pub orbit_poses: usize,
    pub orbit_height: f64,
    /// Distance of the orbit outside the room's half-diagonal footprint, meters.
    pub orbit_margin: f64,
    /// Lawnmower rows crossing the room along x.
    pub sweep_rows: usize,
    pub sweep_poses_per_row: usize,
    pub sweep_height: f64,
    /// How far ahead of the camera the sweep view is aimed, meters.
    pub look_ahead: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            orbit_poses: 96,
            orbit_height: 1.6,
            orbit_margin: 1.0,
            sweep_rows: 4,
            sweep_poses_per_row: 36,
            sweep_height: 2.2,
            look_ahead: 2.0,
        }
    }
}

impl TrajectorySpec {
    pub fn len(&self) -> usize {
        self.orbit_poses + self.sweep_rows * self.sweep_poses_per_row
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_objects: usize,
    pub n_classes: usize,
    /// Room size along x, y, z (meters); the floor is z = 0.
    pub room: [f64; 3],
    /// Range of object edge lengths (meters).
    pub object_extent: [f64; 2],
    /// Chance that an object is placed on top of an existing one.
    pub stack_probability: f64,
    /// Highest allowed top of a stacked object (meters).
    pub stack_max_height: f64,
    /// Minimum horizontal gap between objects standing on the floor.
    pub min_gap: f64,
    /// Minimum horizontal gap between any two objects of the same class.
    pub same_class_gap: f64,
    /// Center distance (horizontal) under which two objects are "near".
    pub near_distance: f64,
    /// Spacing of ground-truth surface points (meters).
    pub point_spacing: f64,
    pub camera: CameraRecord,
    pub trajectory: TrajectorySpec,
    /// Detections whose clipped bbox keeps less than this share of the full hull are skipped.
    pub min_visible_fraction: f64,
    /// Smallest clipped bbox side, pixels.
    pub min_bbox_px: f64,
    /// Centroid depth beyond which objects are not detected (meters).
    pub max_range: f64,
    /// Render per-pixel depth maps and reference them from detections.
    pub depth_maps: bool,
    pub noise: NoiseModel,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_objects: 20,
            n_classes: 8,
            room: [8.0, 8.0, 3.0],
            object_extent: [0.3, 1.0],
            stack_probability: 0.2,
            stack_max_height: 1.8,
            min_gap: 0.35,
            same_class_gap: 1.0,
            near_distance: 1.5,
            point_spacing: 0.05,
            camera: CameraRecord { fx: 500.0, fy: 500.0, cx: 319.5, cy: 239.5, width: 640, height: 480 },
            trajectory: TrajectorySpec::default(),
            min_visible_fraction: 0.6,
            min_bbox_px: 12.0,
            max_range: 10.0,
            depth_maps: false,
            noise: NoiseModel::default(),
        }
    }
}

impl SceneSpec {
    /// Zero-noise scene for the given seed.
    pub fn ideal(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Crowded scene with detector noise: few classes in a small room, so
    /// same-class objects stand close together.
    pub fn noisy(seed: u64) -> Self {
        Self {
            seed,
            n_objects: 30,
            n_classes: 3,
            room: [6.0, 6.0, 3.0],
            min_gap: 0.3,
            same_class_gap: 0.3,
            noise: NoiseModel {
                bbox_jitter_px: 10.0,
                depth_sigma: 0.05,
                false_positive_rate: 0.05,
                miss_rate: 0.1,
                class_flip_rate: 0.03,
                predicate_flip_rate: 0.3,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.room.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad(format!("room extents {:?} must be positive", self.room));
        }
        let [lo, hi] = self.object_extent;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad(format!("object extent range {:?} invalid", self.object_extent));
        }
        if hi > self.room[0].min(self.room[1]) || hi > self.room[2] {
            return bad("objects larger than the room".into());
        }
        if self.n_objects > 0 && self.n_classes == 0 {
            return bad("n_classes must be positive".into());
        }
        for (name, v) in [
            ("stack_probability", self.stack_probability),
            ("min_visible_fraction", self.min_visible_fraction),
            ("false_positive_rate", self.noise.false_positive_rate),
            ("miss_rate", self.noise.miss_rate),
            ("class_flip_rate", self.noise.class_flip_rate),
            ("predicate_flip_rate", self.noise.predicate_flip_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} not in [0,1]"));
            }
        }
        for (name, v) in [
            ("min_gap", self.min_gap),
            ("same_class_gap", self.same_class_gap),
            ("near_distance", self.near_distance),
            ("min_bbox_px", self.min_bbox_px),
            ("bbox_jitter_px", self.noise.bbox_jitter_px),
            ("depth_sigma", self.noise.depth_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} {v} must be non-negative"));
            }
        }
        if !(self.point_spacing.is_finite() && self.point_spacing > 0.0) {
            return bad("point_spacing must be positive".into());
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return bad("max_range must be positive".into());
        }
        self.camera.intrinsics::<f64>().map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        Ok(())
    }

    pub fn vocabulary(&self) -> ClassVocabulary {
        let objects =
            (0..self.n_classes).map(|i| CLASS_NAMES.get(i).map_or_else(|| format!("class_{i}"), |s| s.to_string())).collect();
        ClassVocabulary { objects, predicates: PREDICATES.iter().map(|s| s.to_string()).collect() }
    }
}

/// Axis-aligned ground-truth object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub id: u64,
    pub class_id: usize,
    pub center: [f64; 3],
    /// Full edge lengths along x, y, z.
    pub extent: [f64; 3],
}

impl GtBox {
    pub fn min(&self) -> [f64; 3] {
        std::array::from_fn(|k| self.center[k] - 0.5 * self.extent[k])
    }

    pub fn max(&self) -> [f64; 3] {
        std::array::from_fn(|k| self.center[k] + 0.5 * self.extent[k])
    }

    pub fn corners(&self) -> [[f64; 3]; 8] {
        let (lo, hi) = (self.min(), self.max());
        std::array::from_fn(|i| {
            [
                if i & 1 == 0 { lo[0] } else { hi[0] },
                if i & 2 == 0 { lo[1] } else { hi[1] },
                if i & 4 == 0 { lo[2] } else { hi[2] },
            ]
        })
    }

    /// Gap between the footprints in the xy plane; negative when they overlap.
    pub fn footprint_gap(&self, other: &Self) -> f64 {
        let (a0, a1, b0, b1) = (self.min(), self.max(), other.min(), other.max());
        let gx = (b0[0] - a1[0]).max(a0[0] - b1[0]);
        let gy = (b0[1] - a1[1]).max(a0[1] - b1[1]);
        if gx < 0.0 && gy < 0.0 {
            gx.max(gy)
        } else {
            gx.max(0.0).hypot(gy.max(0.0))
        }
    }

    /// Ray parameter where `origin + t·dir` enters the box, if it does so in front of the origin.
    pub fn ray_entry(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        let (lo, hi) = (self.min(), self.max());
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..3 {
            if dir[k] == 0.0 {
                if origin[k] < lo[k] || origin[k] > hi[k] {
                    return None;
                }
                continue;
            }
            let (a, b) = ((lo[k] - origin[k]) / dir[k], (hi[k] - origin[k]) / dir[k]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1 && t0 > 0.0).then_some(t0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub boxes: Vec<GtBox>,
    pub gt: GroundTruthScene,
    /// Camera-to-world poses in trajectory order.
    pub trajectory: Vec<PoseRecord>,
    pub camera: CameraRecord,
    pub vocab: ClassVocabulary,
}
