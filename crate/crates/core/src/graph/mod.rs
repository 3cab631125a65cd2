//! Scene graph data model: class-labeled Gaussian object nodes joined by
//! directed edges that tally predicate votes.

mod document;
mod local;

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Gaussian3D;
use crate::linalg::Vec3;
use crate::scalar::Real;

pub use document::{read_graph_json, write_dot, write_graph_json, EdgeRecord, GraphDocument, NodeRecord};
pub use local::{build_local_graph, LocalBuild};

/// Default number of evaluation points kept per node.
pub const DEFAULT_EVAL_POINT_CAP: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("edge {0}->{1} has no votes")]
    EmptyVotes(NodeId, NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge {0}->{1} references a missing node")]
    Dangling(NodeId, NodeId),
    #[error("class index out of sync: {0}")]
    ClassIndex(String),
    #[error("node {0} has an invalid covariance")]
    NonPsd(NodeId),
    #[error("node {0} has weight 0")]
    ZeroWeight(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("frame: {0}")]
    Frame(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Object category and predicate names; ids are positions in the lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassVocabulary {
    pub objects: Vec<String>,
    pub predicates: Vec<String>,
}

impl ClassVocabulary {
    pub fn new(objects: Vec<String>, predicates: Vec<String>) -> Result<Self, GraphError> {
        let v = Self { objects, predicates };
        v.validate()?;
        Ok(v)
    }

    /// Placeholder names `class_<i>` / `predicate_<j>`.
    pub fn numbered(n_objects: usize, n_predicates: usize) -> Self {
        Self {
            objects: (0..n_objects).map(|i| format!("class_{i}")).collect(),
            predicates: (0..n_predicates).map(|i| format!("predicate_{i}")).collect(),
        }
    }

    /// True for a vocabulary made only of `numbered` placeholder names.
    pub fn is_placeholder(&self) -> bool {
        *self == Self::numbered(self.objects.len(), self.predicates.len())
    }

    /// Placeholder vocabulary wide enough for every class and predicate in the graph.
    pub fn covering<T: Real>(graph: &GlobalSsg<T>) -> Self {
        let objects = graph.nodes().map(|n| n.class_id + 1).max().unwrap_or(0);
        let predicates = graph.edges().flat_map(|e| e.votes.keys().map(|p| p + 1)).max().unwrap_or(0);
        Self::numbered(objects, predicates)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for (kind, names) in [("object", &self.objects), ("predicate", &self.predicates)] {
            let mut seen = std::collections::HashSet::new();
            for n in names {
                if !seen.insert(n.as_str()) {
                    return Err(GraphError::Vocabulary(format!("duplicate {kind} name {n:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn object_name(&self, id: usize) -> String {
        self.objects.get(id).cloned().unwrap_or_else(|| format!("class_{id}"))
    }

    pub fn predicate_name(&self, id: usize) -> String {
        self.predicates.get(id).cloned().unwrap_or_else(|| format!("predicate_{id}"))
    }

    /// Id of the `none` relationship category, if the vocabulary has one.
    pub fn none_predicate(&self) -> Option<usize> {
        self.predicates.iter().position(|p| p == "none")
    }
}

/// Capped reservoir of back-projected points kept for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalPoints<T> {
    pub points: Vec<Vec3<T>>,
    /// Points offered over the node's lifetime, including those not retained.
    pub seen: u64,
}

impl<T: Real> EvalPoints<T> {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn offer(&mut self, p: Vec3<T>, cap: usize, rng: &mut impl Rng) {
        self.seen += 1;
        if self.points.len() < cap {
            self.points.push(p);
        } else {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < cap {
                self.points[j as usize] = p;
            }
        }
    }

    /// Combines two reservoirs, drawing from each in proportion to how many
    /// points it has seen.
    pub fn merge(&self, other: &Self, cap: usize, seed: u64) -> Self {
        let seen = self.seen + other.seen;
        if self.points.len() + other.points.len() <= cap {
            let mut points = self.points.clone();
            points.extend_from_slice(&other.points);
            return Self { points, seen };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let share = self.seen as f64 / seen.max(1) as f64;
        let lo = cap.saturating_sub(other.points.len());
        let hi = cap.min(self.points.len());
        let from_self = ((cap as f64 * share).round() as usize).clamp(lo, hi);
        let mut points = sample_without_replacement(&self.points, from_self, &mut rng);
        points.extend(sample_without_replacement(&other.points, cap - from_self, &mut rng));
        Self { points, seen }
    }
}

fn sample_without_replacement<P: Copy>(items: &[P], k: usize, rng: &mut impl Rng) -> Vec<P> {
    let mut pool = items.to_vec();
    let k = k.min(pool.len());
    for i in 0..k {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Seed for a deterministic per-event RNG.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 finalizer folded over the parts
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectNode<T> {
    pub id: NodeId,
    pub class_id: usize,
    pub gaussian: Gaussian3D<T>,
    /// Number of detections fused into this node.
    pub weight: u64,
    pub score_sum: T,
    pub eval_points: EvalPoints<T>,
}

impl<T: Real> ObjectNode<T> {
    /// A node for a single detection.
    pub fn from_detection(id: NodeId, class_id: usize, gaussian: Gaussian3D<T>, score: T) -> Self {
        Self { id, class_id, gaussian, weight: 1, score_sum: score, eval_points: EvalPoints::default() }
    }

    pub fn mean_score(&self) -> T {
        self.score_sum / T::lit(self.weight as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote<T> {
    pub count: u64,
    pub score_sum: T,
}

impl<T: Real> Vote<T> {
    pub fn single(score: T) -> Self {
        Self { count: 1, score_sum: score }
    }

    pub fn absorb(&mut self, other: &Self) {
        self.count += other.count;
        self.score_sum += other.score_sum;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationEdge<T> {
    pub subject: NodeId,
    pub object: NodeId,
    pub votes: BTreeMap<usize, Vote<T>>,
}

impl<T: Real> RelationEdge<T> {
    pub fn new(subject: NodeId, object: NodeId) -> Self {
        Self { subject, object, votes: BTreeMap::new() }
    }

    pub fn total_votes(&self) -> u64 {
        self.votes.values().map(|v| v.count).sum()
    }
}

/// Majority vote over an edge's predicates. Ties go to the larger cumulative
/// score, then to the smaller predicate id.
pub fn resolve_predicate<T: Real>(edge: &RelationEdge<T>) -> Result<usize, GraphError> {
    let mut best: Option<(usize, &Vote<T>)> = None;
    for (&pid, vote) in &edge.votes {
        best = match best {
            None => Some((pid, vote)),
            Some((bp, bv)) => {
                let better = vote.count > bv.count || (vote.count == bv.count && vote.score_sum > bv.score_sum);
                if better {
                    Some((pid, vote))
                } else {
                    Some((bp, bv))
                }
            }
        };
    }
    best.map(|(pid, _)| pid).ok_or(GraphError::EmptyVotes(edge.subject, edge.object))
}

/// The graph lifted from a single frame. Node ids are dense local indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSsg<T> {
    pub frame_id: u64,
    pub nodes: Vec<ObjectNode<T>>,
    pub edges: Vec<RelationEdge<T>>,
}

/// The accumulated scene graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSsg<T> {
    nodes: BTreeMap<NodeId, ObjectNode<T>>,
    edges: BTreeMap<(NodeId, NodeId), RelationEdge<T>>,
    class_index: BTreeMap<usize, Vec<NodeId>>,
    next_id: u64,
}

impl<T: Real> Default for GlobalSsg<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> GlobalSsg<T> {
    pub fn new() -> Self {
        Self { nodes: BTreeMap::new(), edges: BTreeMap::new(), class_index: BTreeMap::new(), next_id: 0 }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&ObjectNode<T>> {
        self.nodes.get(&id)
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut ObjectNode<T>> {
        self.nodes.get_mut(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ObjectNode<T>> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &RelationEdge<T>> {
        self.edges.values()
    }

    pub fn edge(&self, subject: NodeId, object: NodeId) -> Option<&RelationEdge<T>> {
        self.edges.get(&(subject, object))
    }

    /// Ids of the nodes with the given class, in insertion order.
    pub fn class_members(&self, class_id: usize) -> &[NodeId] {
        self.class_index.get(&class_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_weight(&self) -> u64 {
        self.nodes.values().map(|n| n.weight).sum()
    }

    pub fn next_id(&self) -> NodeId {
        NodeId(self.next_id)
    }

    /// Inserts a node under a fresh id and returns that id.
    pub fn insert_node(&mut self, mut node: ObjectNode<T>) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        node.id = id;
        self.class_index.entry(node.class_id).or_default().push(id);
        self.nodes.insert(id, node);
        id
    }

    /// Inserts a node keeping its id (used when rebuilding a graph from a document).
    pub fn insert_with_id(&mut self, node: ObjectNode<T>) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.next_id = self.next_id.max(node.id.0 + 1);
        self.class_index.entry(node.class_id).or_default().push(node.id);
        self.nodes.insert(node.id, node);
        Ok(())
    }

    /// Adds votes to the edge `subject -> object`, creating it if needed.
    pub fn add_votes(&mut self, subject: NodeId, object: NodeId, votes: &BTreeMap<usize, Vote<T>>) -> Result<(), GraphError> {
        if subject == object {
            return Err(GraphError::SelfLoop(subject));
        }
        if !self.nodes.contains_key(&subject) || !self.nodes.contains_key(&object) {
            return Err(GraphError::Dangling(subject, object));
        }
        if votes.is_empty() {
            return Err(GraphError::EmptyVotes(subject, object));
        }
        let edge = self.edges.entry((subject, object)).or_insert_with(|| RelationEdge::new(subject, object));
        for (&pid, vote) in votes {
            edge.votes.entry(pid).or_insert(Vote { count: 0, score_sum: T::zero() }).absorb(vote);
        }
        Ok(())
    }

    /// Full structural scan: endpoints exist, no self-loops, edges have votes,
    /// weights positive, covariances symmetric PSD, class index consistent.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        for ((s, o), edge) in &self.edges {
            if s == o {
                return Err(GraphError::SelfLoop(*s));
            }
            if !self.nodes.contains_key(s) || !self.nodes.contains_key(o) {
                return Err(GraphError::Dangling(*s, *o));
            }
            if edge.votes.is_empty() || edge.votes.values().any(|v| v.count == 0) {
                return Err(GraphError::EmptyVotes(*s, *o));
            }
        }
        let mut indexed = 0;
        for (class, ids) in &self.class_index {
            for id in ids {
                match self.nodes.get(id) {
                    Some(n) if n.class_id == *class => indexed += 1,
                    _ => return Err(GraphError::ClassIndex(format!("node {id} under class {class}"))),
                }
            }
        }
        if indexed != self.nodes.len() {
            return Err(GraphError::ClassIndex(format!("{indexed} indexed of {}", self.nodes.len())));
        }
        for (id, node) in &self.nodes {
            if node.id != *id {
                return Err(GraphError::ClassIndex(format!("node keyed {id} carries id {}", node.id)));
            }
            if node.weight == 0 {
                return Err(GraphError::ZeroWeight(*id));
            }
            if !node.gaussian.mean.is_finite() || !node.gaussian.cov.is_finite() || !node.gaussian.is_psd() {
                return Err(GraphError::NonPsd(*id));
            }
        }
        Ok(())
    }

    #[cfg(debug_assertions)]
    pub(crate) fn debug_check(&self) {
        if let Err(e) = self.check_invariants() {
            panic!("scene graph invariant violated: {e}");
        }
    }

    #[cfg(not(debug_assertions))]
    #[inline]
    pub(crate) fn debug_check(&self) {}
}
