use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::graph::{GlobalSsg, NodeId, ObjectNode};
use crate::scalar::Real;

use super::{GroundTruthScene, PointIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchOptions {
    /// Association radius in meters.
    pub radius: f64,
    /// A node's top instance must hold strictly more than this fraction of its points.
    pub majority: f64,
    /// The runner-up count over the top count must stay strictly below this.
    pub ratio: f64,
    /// Count points without a ground-truth neighbour in the majority denominator.
    pub count_unassociated: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self { radius: 0.1, majority: 0.5, ratio: 0.75, count_unassociated: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub node: NodeId,
    pub n_points: usize,
    pub unassociated: usize,
    pub top_instance: Option<u64>,
    pub top_count: usize,
    pub majority_fraction: f64,
    pub second_over_first_ratio: f64,
    /// Both criteria hold.
    pub candidate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Predicted node to instance id, one-to-one.
    pub assignment: BTreeMap<NodeId, u64>,
    pub diagnostics: Vec<NodeDiagnostics>,
}

impl MatchResult {
    /// Instance id to predicted node.
    pub fn inverse(&self) -> BTreeMap<u64, NodeId> {
        self.assignment.iter().map(|(&n, &i)| (i, n)).collect()
    }
}

/// The node's recorded evaluation points, as plain coordinates.
pub fn collect_eval_points<T: Real>(node: &ObjectNode<T>) -> Vec<[f64; 3]> {
    node.eval_points.points.iter().map(|p| [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()]).collect()
}

pub fn match_objects<T: Real>(pred: &GlobalSsg<T>, gt: &GroundTruthScene, opts: &MatchOptions) -> MatchResult {
    let sets: Vec<(NodeId, Vec<[f64; 3]>)> = pred.nodes().map(|n| (n.id, collect_eval_points(n))).collect();
    match_point_sets(&sets, gt, opts)
}

/// Matching over explicit per-node point sets.
pub fn match_point_sets(pred: &[(NodeId, Vec<[f64; 3]>)], gt: &GroundTruthScene, opts: &MatchOptions) -> MatchResult {
    let index = PointIndex::new(
        opts.radius,
        gt.instances.iter().enumerate().flat_map(|(k, inst)| inst.points.iter().map(move |p| (*p, k))),
    );

    let mut diagnostics = Vec::with_capacity(pred.len());
    for (node, points) in pred {
        let mut counts = vec![0usize; gt.instances.len()];
        let mut unassociated = 0;
        for p in points {
            match index.nearest_label(p) {
                Some(k) => counts[k] += 1,
                None => unassociated += 1,
            }
        }
        // Top and runner-up; ties on the top count go to the earlier instance.
        let mut top: Option<usize> = None;
        let mut second = 0usize;
        for (k, &c) in counts.iter().enumerate() {
            match top {
                Some(t) if c <= counts[t] => second = second.max(c),
                _ => {
                    if let Some(t) = top {
                        second = second.max(counts[t]);
                    }
                    top = Some(k);
                }
            }
        }
        let top = top.filter(|&t| counts[t] > 0);
        let top_count = top.map_or(0, |t| counts[t]);
        let denom = if opts.count_unassociated { points.len() } else { points.len() - unassociated };
        let majority_fraction = if denom == 0 { 0.0 } else { top_count as f64 / denom as f64 };
        let second_over_first_ratio = if top_count == 0 { 0.0 } else { second as f64 / top_count as f64 };
        let candidate = top_count > 0 && majority_fraction > opts.majority && second_over_first_ratio < opts.ratio;
        diagnostics.push(NodeDiagnostics {
            node: *node,
            n_points: points.len(),
            unassociated,
            top_instance: top.map(|t| gt.instances[t].id),
            top_count,
            majority_fraction,
            second_over_first_ratio,
            candidate,
        });
    }

    let mut order: Vec<&NodeDiagnostics> = diagnostics.iter().filter(|d| d.candidate).collect();
    order.sort_by(|a, b| b.top_count.cmp(&a.top_count).then(a.node.cmp(&b.node)));
    let mut taken = HashSet::new();
    let mut assignment = BTreeMap::new();
    for d in order {
        let inst = d.top_instance.expect("candidates have a top instance");
        if taken.insert(inst) {
            assignment.insert(d.node, inst);
        }
    }
    MatchResult { assignment, diagnostics }
}
