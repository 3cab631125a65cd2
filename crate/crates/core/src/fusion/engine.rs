use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::geometry::Gaussian3D;
use crate::graph::{build_local_graph, GlobalSsg, LocalSsg, NodeId, ObjectNode};
use crate::io::{DepthSource, FrameRecord};
use crate::scalar::Real;

use super::{hellinger, merge_gaussians, CandidatePolicy, FusionConfig, FusionError, MergeEvent, NodeRef, MIN_COVARIANCE_DET};

struct Pending<T> {
    node: ObjectNode<T>,
    /// Local indices fused into this entry; the first is the entry's own.
    members: Vec<usize>,
}

fn usable<T: Real>(g: &Gaussian3D<T>) -> bool {
    g.mean.is_finite() && g.cov.is_finite() && g.cov.determinant() > T::lit(MIN_COVARIANCE_DET)
}

#[derive(Clone, Copy)]
struct Best<K> {
    key: K,
    distance: f64,
}

fn closer<K>(current: Option<Best<K>>, key: K, distance: f64) -> Option<Best<K>> {
    match current {
        Some(b) if b.distance <= distance => Some(b),
        _ => Some(Best { key, distance }),
    }
}

enum Decision {
    Global(NodeId, f64),
    Queue(usize, f64),
    Insert,
}

fn decide(policy: CandidatePolicy, threshold: f64, global: Option<Best<NodeId>>, queue: Option<Best<usize>>) -> Decision {
    let g = global.filter(|b| b.distance < threshold);
    let q = queue.filter(|b| b.distance < threshold);
    match (policy, g, q) {
        (_, None, None) => Decision::Insert,
        (_, Some(g), None) => Decision::Global(g.key, g.distance),
        (_, None, Some(q)) => Decision::Queue(q.key, q.distance),
        (CandidatePolicy::Joint, Some(g), Some(q)) => {
            if g.distance <= q.distance {
                Decision::Global(g.key, g.distance)
            } else {
                Decision::Queue(q.key, q.distance)
            }
        }
        (CandidatePolicy::GlobalFirst, Some(g), Some(_)) => Decision::Global(g.key, g.distance),
        (CandidatePolicy::QueueFirst, Some(_), Some(q)) => Decision::Queue(q.key, q.distance),
    }
}

/// Folds a local graph into the global graph and returns the merges performed.
///
/// Local nodes are queued by descending detection score. Each dequeued node is
/// compared with every same-class node still queued and every same-class global
/// node; the closest one under the Hellinger threshold absorbs it (see
/// [`CandidatePolicy`]). A merge into a global node updates it in place; a merge
/// with a queued node puts the fused node back at the current queue position so
/// it can chain further merges. Unmatched nodes become new global nodes. Local
/// relations are then mapped onto the surviving ids, self-loops are dropped and
/// votes are accumulated.
pub fn integrate<T: Real>(local: LocalSsg<T>, global: &mut GlobalSsg<T>, cfg: &FusionConfig) -> Vec<MergeEvent> {
    let frame_id = local.frame_id;
    let n_local = local.nodes.len();
    let mut queue: Vec<Pending<T>> =
        local.nodes.into_iter().enumerate().map(|(i, node)| Pending { node, members: vec![i] }).collect();
    // Stable sort keeps local index order among equal scores.
    queue.sort_by(|a, b| b.node.score_sum.partial_cmp(&a.node.score_sum).unwrap_or(std::cmp::Ordering::Equal));

    let mut id_map: Vec<Option<NodeId>> = vec![None; n_local];
    let mut events = Vec::new();
    let threshold = cfg.hellinger_threshold;
    let cap = cfg.eval_point_cap;

    // The head of the queue is the node being placed; everything behind it is
    // still pending. A local-local merge leaves the fused node at the head.
    while !queue.is_empty() {
        let current = &queue[0].node;
        let decision = if usable(&current.gaussian) {
            let mut best_global: Option<Best<NodeId>> = None;
            for &gid in global.class_members(current.class_id) {
                let other = &global.node(gid).expect("class index points at live nodes").gaussian;
                if let Ok(d) = hellinger(&current.gaussian, other) {
                    best_global = closer(best_global, gid, d.as_f64());
                }
            }
            let mut best_queue: Option<Best<usize>> = None;
            for (j, other) in queue.iter().enumerate().skip(1) {
                if other.node.class_id != current.class_id || !usable(&other.node.gaussian) {
                    continue;
                }
                if let Ok(d) = hellinger(&current.gaussian, &other.node.gaussian) {
                    best_queue = closer(best_queue, j, d.as_f64());
                }
            }
            decide(cfg.candidate_policy, threshold, best_global, best_queue)
        } else {
            debug!("frame {frame_id}: degenerate node inserted without matching");
            Decision::Insert
        };

        match decision {
            Decision::Global(gid, distance) => {
                let entry = queue.remove(0);
                let target = global.node_mut(gid).expect("candidate exists");
                let merged = merge_gaussians(target, &entry.node, cap).expect("candidates share the class");
                *target = merged;
                events.push(MergeEvent {
                    kept: NodeRef::Global(gid),
                    absorbed: NodeRef::Local(entry.members[0]),
                    distance,
                    frame_id,
                });
                for m in entry.members {
                    id_map[m] = Some(gid);
                }
            }
            Decision::Queue(j, distance) => {
                let other = queue.remove(j);
                let head = &mut queue[0];
                head.node = merge_gaussians(&head.node, &other.node, cap).expect("candidates share the class");
                events.push(MergeEvent {
                    kept: NodeRef::Local(head.members[0]),
                    absorbed: NodeRef::Local(other.members[0]),
                    distance,
                    frame_id,
                });
                head.members.extend(other.members);
            }
            Decision::Insert => {
                let entry = queue.remove(0);
                let id = global.insert_node(entry.node);
                for m in entry.members {
                    id_map[m] = Some(id);
                }
            }
        }
    }

    for edge in local.edges {
        let (Some(s), Some(o)) =
            (id_map.get(edge.subject.0 as usize).copied().flatten(), id_map.get(edge.object.0 as usize).copied().flatten())
        else {
            warn!("frame {frame_id}: relation references an unknown local node");
            continue;
        };
        if s == o {
            continue;
        }
        if let Err(e) = global.add_votes(s, o, &edge.votes) {
            warn!("frame {frame_id}: {e}");
        }
    }
    global.debug_check();
    events
}

/// Per-frame result of [`FusionEngine::process_frame`].
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub frame_id: u64,
    /// Building the local graph (threshold, depth lookup, lifting).
    pub lift: Duration,
    /// Integrating it into the global graph.
    pub merge: Duration,
    pub accepted: usize,
    pub filtered: usize,
    pub dropped: usize,
    pub merges: Vec<MergeEvent>,
}

/// Owns the global graph of one stream and applies frames to it in order.
#[derive(Debug, Clone)]
pub struct FusionEngine<T> {
    graph: GlobalSsg<T>,
    cfg: FusionConfig,
    accepted: u64,
    frames: u64,
}

impl<T: Real> FusionEngine<T> {
    pub fn new(cfg: FusionConfig) -> Result<Self, FusionError> {
        cfg.validate().map_err(FusionError::Config)?;
        Ok(Self { graph: GlobalSsg::new(), cfg, accepted: 0, frames: 0 })
    }

    pub fn graph(&self) -> &GlobalSsg<T> {
        &self.graph
    }

    pub fn into_graph(self) -> GlobalSsg<T> {
        self.graph
    }

    pub fn config(&self) -> &FusionConfig {
        &self.cfg
    }

    /// Detections accepted into local graphs so far; equals the total node weight.
    pub fn accepted_detections(&self) -> u64 {
        self.accepted
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames
    }

    /// Lifts and integrates one frame. A malformed frame leaves the state untouched.
    pub fn process_frame(&mut self, frame: &FrameRecord, depths: &dyn DepthSource) -> Result<FrameOutcome, FusionError> {
        frame.validate().map_err(FusionError::MalformedFrame)?;
        let t0 = Instant::now();
        let build = build_local_graph::<T>(frame, &self.cfg, depths)?;
        let lift = t0.elapsed();
        let accepted = build.graph.nodes.len();
        let t1 = Instant::now();
        let merges = integrate(build.graph, &mut self.graph, &self.cfg);
        let merge = t1.elapsed();
        self.accepted += accepted as u64;
        self.frames += 1;
        Ok(FrameOutcome {
            frame_id: frame.frame_id,
            lift,
            merge,
            accepted,
            filtered: build.filtered,
            dropped: build.dropped,
            merges,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RelationEdge;
    use crate::graph::Vote;
    use crate::linalg::{vec3, Mat3};

    fn local_node(class_id: usize, mean: [f64; 3], var: f64, score: f64) -> ObjectNode<f64> {
        ObjectNode::from_detection(
            NodeId(0),
            class_id,
            Gaussian3D::new(vec3(mean[0], mean[1], mean[2]), Mat3::from_diagonal([var; 3])),
            score,
        )
    }

    fn local(nodes: Vec<ObjectNode<f64>>, edges: &[(u64, u64, usize)]) -> LocalSsg<f64> {
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, mut n)| {
                n.id = NodeId(i as u64);
                n
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(s, o, p)| {
                let mut e = RelationEdge::new(NodeId(s), NodeId(o));
                e.votes.insert(p, Vote::single(0.9));
                e
            })
            .collect();
        LocalSsg { frame_id: 0, nodes, edges }
    }

    #[test]
    fn distinct_classes_all_inserted() {
        let mut g = GlobalSsg::new();
        let l = local(
            vec![local_node(0, [0.0; 3], 1.0, 0.9), local_node(1, [0.0; 3], 1.0, 0.8), local_node(2, [0.0; 3], 1.0, 0.7)],
            &[],
        );
        let events = integrate(l, &mut g, &FusionConfig::default());
        assert!(events.is_empty());
        assert_eq!(g.node_count(), 3);
        assert!(g.nodes().all(|n| n.weight == 1));
    }

    #[test]
    fn identical_frame_twice_doubles_weights() {
        let make = || {
            local(
                vec![
                    local_node(0, [0.0; 3], 0.1, 0.9),
                    local_node(1, [3.0, 0.0, 0.0], 0.1, 0.8),
                    local_node(0, [0.0, 5.0, 0.0], 0.1, 0.95),
                ],
                &[(0, 1, 0), (2, 1, 1)],
            )
        };
        let mut g = GlobalSsg::new();
        integrate(make(), &mut g, &FusionConfig::default());
        assert_eq!(g.node_count(), 3);
        integrate(make(), &mut g, &FusionConfig::default());
        assert_eq!(g.node_count(), 3);
        assert!(g.nodes().all(|n| n.weight == 2));
        assert!(g.edges().all(|e| e.total_votes() == 2));
    }

    #[test]
    fn queue_internal_merge() {
        // H = sqrt(1 - exp(-|d|²/(8σ²))) with |d|=0.4, σ²=0.5 -> ~0.2 < 0.85
        let a = local_node(4, [0.0; 3], 0.5, 0.9);
        let b = local_node(4, [0.4, 0.0, 0.0], 0.5, 0.8);
        let h = hellinger(&a.gaussian, &b.gaussian).unwrap();
        assert!(h < 0.85);
        let mut g = GlobalSsg::new();
        let events = integrate(local(vec![a, b], &[(0, 1, 0)]), &mut g, &FusionConfig::default());
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.nodes().next().unwrap().weight, 2);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kept, NodeRef::Local(0));
        // Relation between the two merged detections became a self-loop and was dropped.
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn queue_order_is_by_descending_score() {
        // Far apart, so both are inserted; the higher score is dequeued first and gets id 0.
        let low = local_node(0, [0.0; 3], 0.01, 0.71);
        let high = local_node(0, [10.0, 0.0, 0.0], 0.01, 0.99);
        let mut g = GlobalSsg::new();
        integrate(local(vec![low, high], &[]), &mut g, &FusionConfig::default());
        let first = g.node(NodeId(0)).unwrap();
        assert!((first.score_sum - 0.99).abs() < 1e-12);
    }

    #[test]
    fn global_preferred_on_exact_tie() {
        let mut g = GlobalSsg::new();
        let existing = g.insert_node(local_node(0, [1.0, 0.0, 0.0], 1.0, 0.9));
        // The queued partner sits exactly on the global node, so both distances tie.
        let l = local(vec![local_node(0, [0.0; 3], 1.0, 0.9), local_node(0, [1.0, 0.0, 0.0], 1.0, 0.8)], &[]);
        let events = integrate(l, &mut g, &FusionConfig::default());
        assert_eq!(events[0].kept, NodeRef::Global(existing));
    }

    #[test]
    fn policies_differ_when_both_pools_match() {
        let setup = |policy| {
            let mut g = GlobalSsg::new();
            g.insert_node(local_node(0, [1.0, 0.0, 0.0], 1.0, 0.9));
            let l = local(vec![local_node(0, [0.0; 3], 1.0, 0.9), local_node(0, [0.1, 0.0, 0.0], 1.0, 0.8)], &[]);
            let cfg = FusionConfig { candidate_policy: policy, ..FusionConfig::default() };
            integrate(l, &mut g, &cfg)
        };
        assert_eq!(setup(CandidatePolicy::Joint)[0].kept, NodeRef::Local(0));
        assert_eq!(setup(CandidatePolicy::QueueFirst)[0].kept, NodeRef::Local(0));
        assert!(matches!(setup(CandidatePolicy::GlobalFirst)[0].kept, NodeRef::Global(_)));
    }

    #[test]
    fn degenerate_nodes_are_inserted_directly() {
        let mut flat = local_node(0, [0.0; 3], 1.0, 0.9);
        flat.gaussian.cov = Mat3::from_diagonal([1.0, 1.0, 0.0]);
        let mut g = GlobalSsg::new();
        integrate(local(vec![flat.clone()], &[]), &mut g, &FusionConfig::default());
        integrate(local(vec![flat], &[]), &mut g, &FusionConfig::default());
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn far_apart_same_class_stay_separate() {
        let mut g = GlobalSsg::new();
        let l = local(vec![local_node(0, [0.0; 3], 0.01, 0.9), local_node(0, [5.0, 0.0, 0.0], 0.01, 0.9)], &[(0, 1, 2)]);
        integrate(l, &mut g, &FusionConfig::default());
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }
}
