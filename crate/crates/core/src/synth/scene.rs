use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{GroundTruthScene, GtInstance};
use crate::io::PoseRecord;
use crate::linalg::{vec3, Mat3, Vec3};

use super::{GtBox, SceneSpec, SynthError, SyntheticScene, PREDICATE_ABOVE, PREDICATE_NEAR, PREDICATE_ON, PREDICATE_UNDER};

const PLACEMENT_RETRIES: usize = 500;
const CONTACT_TOL: f64 = 1e-9;

/// Builds the boxes, their surface points and rule-derived triplets, and the
/// camera trajectory. A pure function of the spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut boxes: Vec<GtBox> = Vec::with_capacity(spec.n_objects);
    let mut covered = Vec::with_capacity(spec.n_objects);

    for id in 0..spec.n_objects {
        let placed = (0..PLACEMENT_RETRIES).find_map(|_| {
            let b = if rng.random_bool(spec.stack_probability) {
                propose_stacked(spec, &boxes, &covered, id as u64, &mut rng)?
            } else {
                propose_floor(spec, &boxes, id as u64, &mut rng)?
            };
            let clear = boxes.iter().filter(|o| o.class_id == b.class_id).all(|o| b.footprint_gap(o) >= spec.same_class_gap);
            clear.then_some(b)
        });
        let Some(b) = placed else {
            return Err(SynthError::Infeasible { placed: id, requested: spec.n_objects });
        };
        if let Some(base) = boxes.iter().position(|o| is_on(&b, o)) {
            covered[base] = true;
        }
        boxes.push(b);
        covered.push(false);
    }

    let instances = boxes
        .iter()
        .map(|b| GtInstance { id: b.id, class_id: b.class_id, points: surface_points(b, spec.point_spacing) })
        .collect();
    let mut triplets = Vec::new();
    for a in &boxes {
        for b in &boxes {
            if let Some(p) = relation_between(a, b, spec.near_distance) {
                triplets.push((a.id, b.id, p));
            }
        }
    }
    let vocab = spec.vocabulary();
    Ok(SyntheticScene {
        boxes,
        gt: GroundTruthScene { instances, triplets, vocab: Some(vocab.clone()) },
        trajectory: trajectory(spec),
        camera: spec.camera,
        vocab,
    })
}

fn random_extent(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let [lo, hi] = spec.object_extent;
    std::array::from_fn(|_| if lo == hi { lo } else { rng.random_range(lo..hi) })
}

fn propose_floor(spec: &SceneSpec, boxes: &[GtBox], id: u64, rng: &mut ChaCha8Rng) -> Option<GtBox> {
    let extent = random_extent(spec, rng);
    let mut center = [0.0; 3];
    for k in 0..2 {
        let (lo, hi) = (0.5 * extent[k], spec.room[k] - 0.5 * extent[k]);
        center[k] = if hi > lo { rng.random_range(lo..hi) } else { 0.5 * spec.room[k] };
    }
    center[2] = 0.5 * extent[2];
    let b = GtBox { id, class_id: rng.random_range(0..spec.n_classes), center, extent };
    boxes.iter().filter(|o| o.min()[2] <= CONTACT_TOL).all(|o| b.footprint_gap(o) >= spec.min_gap).then_some(b)
}

fn propose_stacked(spec: &SceneSpec, boxes: &[GtBox], covered: &[bool], id: u64, rng: &mut ChaCha8Rng) -> Option<GtBox> {
    let open: Vec<&GtBox> = boxes.iter().zip(covered).filter(|(_, c)| !**c).map(|(b, _)| b).collect();
    if open.is_empty() || spec.n_classes < 2 {
        return None;
    }
    let base = open[rng.random_range(0..open.len())];
    let mut extent = random_extent(spec, rng);
    // The footprint must fit on the base.
    for k in 0..2 {
        if base.extent[k] < spec.object_extent[0] {
            return None;
        }
        extent[k] = extent[k].min(base.extent[k]);
    }
    let bottom = base.max()[2];
    if bottom + extent[2] > spec.stack_max_height.min(spec.room[2]) {
        return None;
    }
    let mut center = [0.0; 3];
    for k in 0..2 {
        let slack = 0.5 * (base.extent[k] - extent[k]);
        center[k] = base.center[k] + if slack > 0.0 { rng.random_range(-slack..slack) } else { 0.0 };
    }
    center[2] = bottom + 0.5 * extent[2];
    let mut class_id = rng.random_range(0..spec.n_classes - 1);
    if class_id >= base.class_id {
        class_id += 1;
    }
    Some(GtBox { id, class_id, center, extent })
}

fn footprints_overlap(a: &GtBox, b: &GtBox) -> bool {
    a.footprint_gap(b) < 0.0
}

fn is_on(a: &GtBox, b: &GtBox) -> bool {
    (a.min()[2] - b.max()[2]).abs() <= CONTACT_TOL && footprints_overlap(a, b)
}

fn is_above(a: &GtBox, b: &GtBox) -> bool {
    a.min()[2] > b.max()[2] + CONTACT_TOL && footprints_overlap(a, b)
}

/// Geometric predicate for the ordered pair `(a, b)`, by priority on, above,
/// under, near. "near" is emitted once per unordered pair, from the smaller id.
pub fn relation_between(a: &GtBox, b: &GtBox, near_distance: f64) -> Option<usize> {
    if a.id == b.id {
        return None;
    }
    if is_on(a, b) {
        Some(PREDICATE_ON)
    } else if is_above(a, b) {
        Some(PREDICATE_ABOVE)
    } else if is_on(b, a) || is_above(b, a) {
        Some(PREDICATE_UNDER)
    } else if a.id < b.id && (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]) < near_distance {
        Some(PREDICATE_NEAR)
    } else {
        None
    }
}

/// Points on a regular grid over each face of the box.
fn surface_points(b: &GtBox, spacing: f64) -> Vec<[f64; 3]> {
    let (lo, hi) = (b.min(), b.max());
    let mut pts = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let nu = (b.extent[u] / spacing).ceil() as usize + 1;
        let nv = (b.extent[v] / spacing).ceil() as usize + 1;
        for side in [lo[axis], hi[axis]] {
            for i in 0..nu {
                for j in 0..nv {
                    let mut p = [0.0; 3];
                    p[axis] = side;
                    p[u] = lo[u] + b.extent[u] * i as f64 / (nu - 1) as f64;
                    p[v] = lo[v] + b.extent[v] * j as f64 / (nv - 1) as f64;
                    pts.push(p);
                }
            }
        }
    }
    pts
}

/// Camera-to-world pose at `eye` looking at `target`, world z up. Camera axes:
/// x right, y down, z forward.
pub(crate) fn look_at(eye: [f64; 3], target: [f64; 3]) -> PoseRecord {
    let e = vec3(eye[0], eye[1], eye[2]);
    let forward = (vec3(target[0], target[1], target[2]) - e).normalized();
    let mut right = forward.cross(&vec3(0.0, 0.0, 1.0));
    if right.norm() < 1e-9 {
        right = vec3(1.0, 0.0, 0.0);
    }
    let right = right.normalized();
    let down = forward.cross(&right);
    let cols: [Vec3<f64>; 3] = [right, down, forward];
    let r = Mat3::from_rows(std::array::from_fn(|i| std::array::from_fn(|j| cols[j][i])));
    let mut rotation = [0.0; 9];
    for (dst, v) in rotation.iter_mut().zip(r.iter()) {
        *dst = v;
    }
    PoseRecord { rotation, translation: eye }
}

/// Orbit around the room followed by lawnmower sweeps across it.
fn trajectory(spec: &SceneSpec) -> Vec<PoseRecord> {
    let t = &spec.trajectory;
    let [lx, ly, _] = spec.room;
    let (cx, cy) = (0.5 * lx, 0.5 * ly);
    let radius = 0.5 * lx.hypot(ly) + t.orbit_margin;
    let mut poses = Vec::with_capacity(t.len());
    for i in 0..t.orbit_poses {
        let a = std::f64::consts::TAU * i as f64 / t.orbit_poses as f64;
        let eye = [cx + radius * a.cos(), cy + radius * a.sin(), t.orbit_height];
        poses.push(look_at(eye, [cx, cy, 0.4]));
    }
    for row in 0..t.sweep_rows {
        let y = ly * (row as f64 + 0.5) / t.sweep_rows as f64;
        let forward = if row % 2 == 0 { 1.0 } else { -1.0 };
        for k in 0..t.sweep_poses_per_row {
            let s = if t.sweep_poses_per_row > 1 { k as f64 / (t.sweep_poses_per_row - 1) as f64 } else { 0.5 };
            // Start behind the room edge so the first objects are seen head on.
            let x0 = -t.look_ahead;
            let x = if forward > 0.0 { x0 + s * (lx - x0) } else { lx - s * (lx - x0) };
            let eye = [x, y, t.sweep_height];
            let target = [x + forward * t.look_ahead, y, 0.3];
            poses.push(look_at(eye, target));
        }
    }
    poses
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec::ideal(11);
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = generate_scene(&SceneSpec::ideal(12)).unwrap();
        assert_ne!(generate_scene(&spec).unwrap().boxes, other.boxes);
    }

    #[test]
    fn empty_scene() {
        let s = generate_scene(&SceneSpec { n_objects: 0, ..SceneSpec::default() }).unwrap();
        assert!(s.boxes.is_empty() && s.gt.instances.is_empty() && s.gt.triplets.is_empty());
    }

    #[test]
    fn stacked_pair_yields_one_on() {
        let base = GtBox { id: 0, class_id: 0, center: [1.0, 1.0, 0.25], extent: [0.5, 0.5, 0.5] };
        let top = GtBox { id: 1, class_id: 1, center: [1.0, 1.0, 0.65], extent: [0.3, 0.3, 0.3] };
        assert_eq!(relation_between(&top, &base, 0.0), Some(PREDICATE_ON));
        assert_eq!(relation_between(&base, &top, 0.0), Some(PREDICATE_UNDER));
        let rels: Vec<_> = [(&top, &base), (&base, &top)]
            .into_iter()
            .filter_map(|(a, b)| relation_between(a, b, 0.0))
            .filter(|&p| p == PREDICATE_ON)
            .collect();
        assert_eq!(rels.len(), 1);
    }

    #[test]
    fn near_is_emitted_once_per_pair() {
        let a = GtBox { id: 0, class_id: 0, center: [1.0, 1.0, 0.25], extent: [0.5; 3] };
        let b = GtBox { id: 1, class_id: 1, center: [2.0, 1.0, 0.25], extent: [0.5; 3] };
        assert_eq!(relation_between(&a, &b, 1.5), Some(PREDICATE_NEAR));
        assert_eq!(relation_between(&b, &a, 1.5), None);
        assert_eq!(relation_between(&a, &b, 0.9), None);
    }

    #[test]
    fn placement_respects_room_and_gaps() {
        let spec = SceneSpec { n_objects: 30, ..SceneSpec::ideal(5) };
        let s = generate_scene(&spec).unwrap();
        assert_eq!(s.boxes.len(), 30);
        for (i, a) in s.boxes.iter().enumerate() {
            for k in 0..3 {
                assert!(a.min()[k] >= -1e-12 && a.max()[k] <= spec.room[k] + 1e-12);
            }
            for b in &s.boxes[i + 1..] {
                if a.class_id == b.class_id {
                    assert!(a.footprint_gap(b) >= spec.same_class_gap);
                }
                if a.min()[2] == 0.0 && b.min()[2] == 0.0 {
                    assert!(a.footprint_gap(b) >= spec.min_gap);
                }
            }
        }
        s.gt.validate().unwrap();
    }

    #[test]
    fn infeasible_placement_reported() {
        let spec = SceneSpec { n_objects: 500, room: [3.0, 3.0, 3.0], stack_probability: 0.0, ..SceneSpec::default() };
        assert!(matches!(generate_scene(&spec), Err(SynthError::Infeasible { .. })));
    }

    #[test]
    fn surface_points_lie_on_faces() {
        let b = GtBox { id: 0, class_id: 0, center: [0.0; 3], extent: [1.0, 0.5, 0.2] };
        let pts = surface_points(&b, 0.1);
        for p in &pts {
            let on_face = (0..3).any(|k| (p[k].abs() - 0.5 * b.extent[k]).abs() < 1e-12);
            assert!(on_face, "{p:?}");
        }
        assert!(pts.len() > 100);
    }

    #[test]
    fn look_at_is_a_rotation() {
        let p = look_at([0.0, 0.0, 1.0], [3.0, 1.0, 0.0]).pose::<f64>().unwrap();
        let fwd = p.rotation * vec3(0.0, 0.0, 1.0);
        assert!(fwd.max_abs_diff(&vec3(3.0, 1.0, -1.0).normalized()) < 1e-12);
        // Image "down" points toward world -z.
        assert!((p.rotation * vec3(0.0, 1.0, 0.0)).z() < 0.0);
    }
}
