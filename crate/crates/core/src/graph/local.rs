use std::collections::HashMap;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fusion::FusionConfig;
use crate::geometry::{backproject_mean, lift_detection, CameraIntrinsics, CameraPose, LiftOptions};
use crate::io::{sample_centroid_depth, DepthMap, DepthSource, DetectionRecord, FrameRecord};
use crate::linalg::vec2;
use crate::scalar::Real;

use super::{mix_seed, GraphError, LocalSsg, NodeId, ObjectNode, RelationEdge, Vote};

/// A local graph plus bookkeeping about what was discarded.
#[derive(Debug, Clone)]
pub struct LocalBuild<T> {
    pub graph: LocalSsg<T>,
    /// Detection index of each local node.
    pub source_detection: Vec<usize>,
    /// Detections below the confidence threshold.
    pub filtered: usize,
    /// Detections that passed the threshold but could not be lifted.
    pub dropped: usize,
}

/// Lifts one frame into a local graph.
///
/// Detections under the confidence threshold are discarded, the rest are lifted
/// to weight-1 nodes (a lift failure drops only that detection). Relations with
/// both endpoints alive are deduplicated per ordered pair (best score wins),
/// ranked by score and truncated to `top_k_relations`.
pub fn build_local_graph<T: Real>(
    frame: &FrameRecord,
    cfg: &FusionConfig,
    depths: &dyn DepthSource,
) -> Result<LocalBuild<T>, GraphError> {
    let cam: CameraIntrinsics<T> = frame.camera.intrinsics().map_err(|e| GraphError::Frame(e.to_string()))?;
    let pose: CameraPose<T> = frame.pose.pose().map_err(|e| GraphError::Frame(e.to_string()))?;
    let opts = LiftOptions { min_depth: T::lit(cfg.min_depth), jacobian_mode: cfg.jacobian_mode };

    let mut nodes = Vec::new();
    let mut source_detection = Vec::new();
    let mut local_of: HashMap<usize, usize> = HashMap::new();
    let (mut filtered, mut dropped) = (0, 0);

    for (i, det) in frame.detections.iter().enumerate() {
        if det.score < cfg.confidence_threshold {
            filtered += 1;
            continue;
        }
        let depth_map = det.depth_ref.as_deref().and_then(|r| match depths.depth_map(r) {
            Ok(m) => Some(m),
            Err(e) => {
                debug!("frame {} detection {i}: {e}", frame.frame_id);
                None
            }
        });
        let z = match (det.centroid_depth, depth_map.as_deref()) {
            (Some(z), _) => Some(z),
            (None, Some(map)) => sample_centroid_depth(det.bbox.cx, det.bbox.cy, map).ok(),
            (None, None) => None,
        };
        let Some(z) = z else {
            debug!("frame {} detection {i}: no depth", frame.frame_id);
            dropped += 1;
            continue;
        };
        let bbox = det.bbox::<T>();
        let gaussian = match lift_detection(&bbox, T::lit(z), &cam, &pose, &opts) {
            Ok(g) => g,
            Err(e) => {
                debug!("frame {} detection {i}: {e}", frame.frame_id);
                dropped += 1;
                continue;
            }
        };
        let local = nodes.len();
        let mut node = ObjectNode::from_detection(NodeId(local as u64), det.class_id, gaussian, T::lit(det.score));
        if cfg.record_eval_points {
            let seed = mix_seed(&[frame.frame_id, i as u64]);
            match depth_map.as_deref() {
                Some(map) => record_region_points(&mut node, det, map, &cam, &pose, cfg.eval_point_cap, seed),
                None => node.eval_points.offer(gaussian.mean, cfg.eval_point_cap, &mut ChaCha8Rng::seed_from_u64(seed)),
            }
        }
        local_of.insert(i, local);
        source_detection.push(i);
        nodes.push(node);
    }

    // Best-scoring relation per ordered pair, then the top K overall.
    let mut best: HashMap<(usize, usize), (usize, usize, f64)> = HashMap::new();
    for (ri, rel) in frame.relations.iter().enumerate() {
        let (Some(&s), Some(&o)) = (local_of.get(&rel.subject), local_of.get(&rel.object)) else {
            continue;
        };
        if s == o {
            continue;
        }
        let entry = best.entry((s, o)).or_insert((ri, rel.predicate, rel.score));
        if rel.score > entry.2 {
            *entry = (ri, rel.predicate, rel.score);
        }
    }
    let mut kept: Vec<((usize, usize), (usize, usize, f64))> = best.into_iter().collect();
    kept.sort_by(|a, b| b.1 .2.total_cmp(&a.1 .2).then(a.1 .0.cmp(&b.1 .0)));
    kept.truncate(cfg.top_k_relations);
    kept.sort_by_key(|k| k.1 .0);

    let edges = kept
        .into_iter()
        .map(|((s, o), (_, predicate, score))| {
            let mut e = RelationEdge::new(NodeId(s as u64), NodeId(o as u64));
            e.votes.insert(predicate, Vote::single(T::lit(score)));
            e
        })
        .collect();

    Ok(LocalBuild { graph: LocalSsg { frame_id: frame.frame_id, nodes, edges }, source_detection, filtered, dropped })
}

/// Back-projects the valid depth pixels of the central half-size window of the bbox.
fn record_region_points<T: Real>(
    node: &mut ObjectNode<T>,
    det: &DetectionRecord,
    map: &DepthMap,
    cam: &CameraIntrinsics<T>,
    pose: &CameraPose<T>,
    cap: usize,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = &det.bbox;
    let x0 = (b.cx - b.w / 4.0).ceil().max(0.0) as i64;
    let x1 = (b.cx + b.w / 4.0).floor().min(map.width as f64 - 1.0) as i64;
    let y0 = (b.cy - b.h / 4.0).ceil().max(0.0) as i64;
    let y1 = (b.cy + b.h / 4.0).floor().min(map.height as f64 - 1.0) as i64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let Some(z) = map.get(x, y) else { continue };
            let p = vec2(T::lit(x as f64), T::lit(y as f64));
            if let Ok(world) = backproject_mean(&p, T::lit(z), cam, pose) {
                node.eval_points.offer(world, cap, &mut rng);
            }
        }
    }
}
