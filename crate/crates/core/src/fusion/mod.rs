//! Incremental fusion of local graphs into the global scene graph.
//!
//! Local nodes are matched to same-class nodes (in the pending queue and in
//! the global graph) by Hellinger distance between their Gaussians; pairs
//! closer than the threshold are fused by weighted moment matching, and local
//! relations are re-pointed at the surviving nodes.

mod distance;
mod engine;
mod merge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::JacobianMode;
use crate::graph::{GraphError, NodeId, DEFAULT_EVAL_POINT_CAP};

pub use distance::{bhattacharyya, hellinger, hellinger_from_bhattacharyya, MIN_COVARIANCE_DET};
pub use engine::{integrate, FrameOutcome, FusionEngine};
pub use merge::{merge_gaussians, merge_moments};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("degenerate covariance (determinant {0:e})")]
    DegenerateCovariance(f64),
    #[error("cannot merge class {0} with class {1}")]
    ClassMismatch(usize, usize),
    #[error("cannot merge a node of weight 0")]
    ZeroWeight,
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid fusion config: {0}")]
    Config(String),
}

/// Which candidate pool wins when both the pending queue and the global graph
/// hold a node under the threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePolicy {
    /// Closest candidate overall; the global one on exact ties.
    #[default]
    Joint,
    GlobalFirst,
    QueueFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub hellinger_threshold: f64,
    pub confidence_threshold: f64,
    pub top_k_relations: usize,
    pub min_depth: f64,
    pub jacobian_mode: JacobianMode,
    pub candidate_policy: CandidatePolicy,
    pub record_eval_points: bool,
    pub eval_point_cap: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            hellinger_threshold: 0.85,
            confidence_threshold: 0.7,
            top_k_relations: 10,
            min_depth: crate::geometry::DEFAULT_MIN_DEPTH,
            jacobian_mode: JacobianMode::CameraFrame,
            candidate_policy: CandidatePolicy::Joint,
            record_eval_points: false,
            eval_point_cap: DEFAULT_EVAL_POINT_CAP,
        }
    }
}

impl FusionConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        Self { hellinger_threshold: threshold, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.hellinger_threshold > 0.0 && self.hellinger_threshold < 1.0) {
            return Err(format!("hellinger_threshold {} not in (0,1)", self.hellinger_threshold));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(format!("confidence_threshold {} not in [0,1]", self.confidence_threshold));
        }
        if self.top_k_relations == 0 {
            return Err("top_k_relations must be positive".into());
        }
        if !(self.min_depth.is_finite() && self.min_depth > 0.0) {
            return Err(format!("min_depth {} must be positive", self.min_depth));
        }
        if self.eval_point_cap == 0 {
            return Err("eval_point_cap must be positive".into());
        }
        Ok(())
    }
}

/// A node reference in a merge: a global node id, or a local node index of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRef {
    Global(NodeId),
    Local(usize),
}

/// Audit record of one fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub kept: NodeRef,
    pub absorbed: NodeRef,
    pub distance: f64,
    pub frame_id: u64,
}
