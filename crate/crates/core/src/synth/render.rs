use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::mix_seed;
use crate::io::{
    write_depth_map, write_frame_stream, BboxRecord, CameraRecord, DepthMap, DetectionRecord, FrameRecord, InMemoryDepth,
    IoError, PoseRecord, RelationRecord,
};

use super::{relation_between, GtBox, SceneSpec, SyntheticScene, PREDICATES};

/// Corners closer than this to the image plane make a box unobservable.
const NEAR_PLANE: f64 = 0.1;
const RENDER_STREAM: u64 = 0x7265_6e64;

/// A box's silhouette hull in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxProjection {
    /// Unclipped corner hull `[u_min, v_min, u_max, v_max]`.
    pub hull: [f64; 4],
    /// Hull clipped to the image area.
    pub clipped: [f64; 4],
    /// Clipped hull area over full hull area.
    pub visible_fraction: f64,
}

impl BoxProjection {
    pub fn center(&self) -> [f64; 2] {
        let c = &self.clipped;
        [0.5 * (c[0] + c[2]), 0.5 * (c[1] + c[3])]
    }

    pub fn size(&self) -> [f64; 2] {
        let c = &self.clipped;
        [c[2] - c[0], c[3] - c[1]]
    }
}

struct View {
    r: [[f64; 3]; 3],
    t: [f64; 3],
    cam: CameraRecord,
}

impl View {
    fn new(pose: &PoseRecord, cam: &CameraRecord) -> Self {
        let r = std::array::from_fn(|i| std::array::from_fn(|j| pose.rotation[3 * i + j]));
        Self { r, t: pose.translation, cam: *cam }
    }

    fn to_camera(&self, p: &[f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.t[0], p[1] - self.t[1], p[2] - self.t[2]];
        std::array::from_fn(|j| (0..3).map(|i| self.r[i][j] * d[i]).sum())
    }

    /// World direction of the ray through pixel `(u, v)`, scaled so its camera z is 1.
    fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        let c = [(u - self.cam.cx) / self.cam.fx, (v - self.cam.cy) / self.cam.fy, 1.0];
        std::array::from_fn(|i| (0..3).map(|j| self.r[i][j] * c[j]).sum())
    }
}

/// Projects the box corners and takes their axis-aligned hull, clipped to the
/// image. `None` when any corner is behind or too close to the camera, or the
/// hull misses the image.
pub fn project_box(b: &GtBox, cam: &CameraRecord, pose: &PoseRecord) -> Option<BoxProjection> {
    project_in(b, &View::new(pose, cam))
}

fn project_in(b: &GtBox, view: &View) -> Option<BoxProjection> {
    let cam = &view.cam;
    let mut hull = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for corner in b.corners() {
        let c = view.to_camera(&corner);
        if c[2] < NEAR_PLANE {
            return None;
        }
        let u = cam.fx * c[0] / c[2] + cam.cx;
        let v = cam.fy * c[1] / c[2] + cam.cy;
        hull = [hull[0].min(u), hull[1].min(v), hull[2].max(u), hull[3].max(v)];
    }
    // Pixel centers sit at integer coordinates, so the image spans [-0.5, size - 0.5].
    let (w, h) = (cam.width as f64 - 0.5, cam.height as f64 - 0.5);
    let clipped = [hull[0].max(-0.5), hull[1].max(-0.5), hull[2].min(w), hull[3].min(h)];
    if clipped[2] <= clipped[0] || clipped[3] <= clipped[1] {
        return None;
    }
    let area = |r: &[f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    Some(BoxProjection { hull, clipped, visible_fraction: area(&clipped) / area(&hull) })
}

/// Rendered frames plus the depth maps their detections reference.
#[derive(Debug, Clone, Default)]
pub struct RenderedStream {
    pub frames: Vec<FrameRecord>,
    pub depth_maps: Vec<(String, DepthMap)>,
}

impl RenderedStream {
    pub fn depth_source(&self) -> InMemoryDepth {
        let mut src = InMemoryDepth::default();
        for (key, map) in &self.depth_maps {
            src.insert(key.clone(), map.clone());
        }
        src
    }

    /// Writes the frame stream, and the depth maps relative to `depth_root`.
    pub fn write(&self, frames_path: &Path, depth_root: &Path) -> Result<(), IoError> {
        let file = fs::File::create(frames_path).map_err(|e| IoError::write(frames_path, e))?;
        let mut out = BufWriter::new(file);
        write_frame_stream(&self.frames, &mut out).map_err(|e| IoError::write(frames_path, e))?;
        for (key, map) in &self.depth_maps {
            let path = depth_root.join(key);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| IoError::write(dir, e))?;
            }
            write_depth_map(&path, map)?;
        }
        Ok(())
    }
}

struct Seen<'a> {
    b: &'a GtBox,
    proj: BoxProjection,
    depth: f64,
}

/// Renders one frame per trajectory pose. Frame ids follow the pose order.
pub fn render_frames(scene: &SyntheticScene, spec: &SceneSpec) -> RenderedStream {
    let mut stream = RenderedStream::default();
    for (idx, pose) in scene.trajectory.iter().enumerate() {
        let frame_id = idx as u64;
        let view = View::new(pose, &scene.camera);
        let seen = visible_boxes(scene, spec, &view);
        let depth_ref = spec.depth_maps.then(|| format!("depth/{frame_id:06}.frdp"));
        let frame = detect(scene, spec, &view, frame_id, &seen, depth_ref.clone());
        if let Some(key) = depth_ref {
            stream.depth_maps.push((key, depth_image(scene, &view)));
        }
        stream.frames.push(frame);
    }
    stream
}

fn visible_boxes<'a>(scene: &'a SyntheticScene, spec: &SceneSpec, view: &View) -> Vec<Seen<'a>> {
    let mut seen = Vec::new();
    for b in &scene.boxes {
        let Some(proj) = project_in(b, view) else { continue };
        let [w, h] = proj.size();
        if proj.visible_fraction < spec.min_visible_fraction || w < spec.min_bbox_px || h < spec.min_bbox_px {
            continue;
        }
        let [u, v] = proj.center();
        let Some(depth) = b.ray_entry(view.t, view.ray(u, v)) else { continue };
        if depth > spec.max_range {
            continue;
        }
        seen.push(Seen { b, proj, depth });
    }
    seen
}

fn detect(
    scene: &SyntheticScene,
    spec: &SceneSpec,
    view: &View,
    frame_id: u64,
    seen: &[Seen<'_>],
    depth_ref: Option<String>,
) -> FrameRecord {
    let noise = &spec.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, RENDER_STREAM, frame_id]));
    let jitter = Normal::new(0.0, noise.bbox_jitter_px).expect("finite sigma");
    let depth_err = Normal::new(0.0, noise.depth_sigma).expect("finite sigma");
    let (img_w, img_h) = (view.cam.width as f64, view.cam.height as f64);

    let mut detections = Vec::new();
    let mut instance_of = Vec::new();
    let mut areas = Vec::new();
    for s in seen {
        if noise.miss_rate > 0.0 && rng.random_bool(noise.miss_rate) {
            continue;
        }
        let [mut cx, mut cy] = s.proj.center();
        let [mut w, mut h] = s.proj.size();
        let mut depth = s.depth;
        let mut class_id = s.b.class_id;
        if noise.bbox_jitter_px > 0.0 {
            cx += jitter.sample(&mut rng);
            cy += jitter.sample(&mut rng);
            w = (w + jitter.sample(&mut rng)).max(2.0);
            h = (h + jitter.sample(&mut rng)).max(2.0);
        }
        if noise.depth_sigma > 0.0 {
            depth = (depth + depth_err.sample(&mut rng)).max(NEAR_PLANE);
        }
        if noise.class_flip_rate > 0.0 && spec.n_classes > 1 && rng.random_bool(noise.class_flip_rate) {
            let other = rng.random_range(0..spec.n_classes - 1);
            class_id = if other >= class_id { other + 1 } else { other };
        }
        areas.push(w * h);
        instance_of.push(Some(s.b.id));
        detections.push(DetectionRecord {
            class_id,
            score: 1.0,
            bbox: BboxRecord { cx, cy, w, h },
            centroid_depth: Some(depth),
            depth_ref: depth_ref.clone(),
        });
        if noise.false_positive_rate > 0.0 && rng.random_bool(noise.false_positive_rate) {
            let w = rng.random_range(20.0..160.0);
            let h = rng.random_range(20.0..160.0);
            detections.push(DetectionRecord {
                class_id: rng.random_range(0..spec.n_classes),
                score: rng.random_range(0.5..1.0),
                bbox: BboxRecord { cx: rng.random_range(0.0..img_w), cy: rng.random_range(0.0..img_h), w, h },
                centroid_depth: Some(rng.random_range(0.5..0.5 * spec.max_range)),
                depth_ref: depth_ref.clone(),
            });
            areas.push(w * h);
            instance_of.push(None);
        }
    }

    let mut relations = Vec::new();
    let by_id = |id: u64| scene.boxes.iter().find(|b| b.id == id);
    for (i, a) in instance_of.iter().enumerate() {
        for (j, b) in instance_of.iter().enumerate() {
            let (Some(a), Some(b)) = (a, b) else { continue };
            let (Some(ba), Some(bb)) = (by_id(*a), by_id(*b)) else { continue };
            if let Some(mut predicate) = relation_between(ba, bb, spec.near_distance) {
                if noise.predicate_flip_rate > 0.0 && rng.random_bool(noise.predicate_flip_rate) {
                    let other = rng.random_range(0..PREDICATES.len() - 1);
                    predicate = if other >= predicate { other + 1 } else { other };
                }
                let score = (areas[i] * areas[j]).sqrt() / (img_w * img_h);
                relations.push(RelationRecord { subject: i, object: j, predicate, score: score.min(1.0) });
            }
        }
    }

    FrameRecord {
        frame_id,
        camera: view.cam,
        pose: PoseRecord { rotation: std::array::from_fn(|k| view.r[k / 3][k % 3]), translation: view.t },
        detections,
        relations,
    }
}

/// Nearest box surface along every pixel ray; 0 where nothing is hit.
fn depth_image(scene: &SyntheticScene, view: &View) -> DepthMap {
    let (w, h) = (view.cam.width, view.cam.height);
    let mut values = vec![0.0f32; w as usize * h as usize];
    for b in &scene.boxes {
        let Some(proj) = project_in(b, view) else { continue };
        let c = proj.clipped;
        let (u0, v0) = (c[0].ceil().max(0.0) as u32, c[1].ceil().max(0.0) as u32);
        let (u1, v1) = ((c[2].floor() as u32).min(w - 1), (c[3].floor() as u32).min(h - 1));
        for v in v0..=v1 {
            for u in u0..=u1 {
                let Some(t) = b.ray_entry(view.t, view.ray(u as f64, v as f64)) else { continue };
                let slot = &mut values[(v * w + u) as usize];
                if *slot <= 0.0 || (t as f32) < *slot {
                    *slot = t as f32;
                }
            }
        }
    }
    DepthMap::new(w, h, values).expect("sized to the image")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_scene;

    fn cam() -> CameraRecord {
        CameraRecord { fx: 500.0, fy: 500.0, cx: 319.5, cy: 239.5, width: 640, height: 480 }
    }

    const IDENTITY: PoseRecord = PoseRecord { rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], translation: [0.0; 3] };

    #[test]
    fn cube_on_axis_projects_to_front_face_hull() {
        let b = GtBox { id: 0, class_id: 0, center: [0.0, 0.0, 2.0], extent: [1.0; 3] };
        let p = project_box(&b, &cam(), &IDENTITY).unwrap();
        // Front face at z = 1.5 spans ±0.5 m.
        let expected = 2.0 * 500.0 * 0.5 / 1.5;
        let [w, h] = p.size();
        assert!((w - expected).abs() < 1e-9 && (h - expected).abs() < 1e-9);
        let [u, v] = p.center();
        assert!((u - 319.5).abs() < 1e-9 && (v - 239.5).abs() < 1e-9);
        assert_eq!(p.visible_fraction, 1.0);
        assert!((b.ray_entry([0.0; 3], [0.0, 0.0, 1.0]).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn box_behind_camera_is_invisible() {
        let b = GtBox { id: 0, class_id: 0, center: [0.0, 0.0, -3.0], extent: [1.0; 3] };
        assert!(project_box(&b, &cam(), &IDENTITY).is_none());
    }

    #[test]
    fn zero_noise_detections_match_geometry() {
        let spec = SceneSpec::ideal(3);
        let scene = generate_scene(&spec).unwrap();
        let stream = render_frames(&scene, &spec);
        assert_eq!(stream.frames.len(), spec.trajectory.len());
        for f in &stream.frames {
            f.validate().unwrap();
            for d in &f.detections {
                assert_eq!(d.score, 1.0);
                assert!(d.centroid_depth.unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn zero_rates_are_identity() {
        let spec = SceneSpec { noise: crate::synth::NoiseModel::default(), ..SceneSpec::noisy(4) };
        let scene = generate_scene(&spec).unwrap();
        for (f, pose) in render_frames(&scene, &spec).frames.iter().zip(&scene.trajectory) {
            for d in &f.detections {
                let exact = scene.boxes.iter().filter_map(|b| project_box(b, &scene.camera, pose)).any(|p| {
                    let ([cx, cy], [w, h]) = (p.center(), p.size());
                    (cx, cy, w, h) == (d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h)
                });
                assert!(exact);
            }
        }
    }

    #[test]
    fn depth_map_agrees_with_centroid_depth() {
        let spec = SceneSpec {
            depth_maps: true,
            trajectory: crate::synth::TrajectorySpec { orbit_poses: 4, sweep_rows: 0, ..Default::default() },
            ..SceneSpec::ideal(2)
        };
        let scene = generate_scene(&spec).unwrap();
        let stream = render_frames(&scene, &spec);
        let src = stream.depth_source();
        let mut checked = 0;
        for f in &stream.frames {
            for d in &f.detections {
                let map = crate::io::DepthSource::depth_map(&src, d.depth_ref.as_deref().unwrap()).unwrap();
                let sampled = crate::io::sample_centroid_depth(d.bbox.cx, d.bbox.cy, &map).unwrap();
                // Pixel rounding and occluders make these differ; the sampled surface is never behind it.
                assert!(sampled <= d.centroid_depth.unwrap() + 0.2);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }
}
