//! Matching predicted objects to ground-truth instances and scoring recall.

mod index;
mod matching;
mod recall;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ClassVocabulary;

pub use index::PointIndex;
pub use matching::{collect_eval_points, match_objects, match_point_sets, MatchOptions, MatchResult, NodeDiagnostics};
pub use recall::{compute_recalls, ClassRecall, RecallCounts, RecallReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub id: u64,
    pub class_id: usize,
    pub points: Vec<[f64; 3]>,
}

/// Annotated scene: instances with surface points, and `(subject, object, predicate)` triplets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScene {
    pub instances: Vec<GtInstance>,
    pub triplets: Vec<(u64, u64, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<ClassVocabulary>,
}

impl GroundTruthScene {
    pub fn validate(&self) -> Result<(), String> {
        let mut ids = HashSet::new();
        for inst in &self.instances {
            if !ids.insert(inst.id) {
                return Err(format!("duplicate instance id {}", inst.id));
            }
            if inst.points.is_empty() {
                return Err(format!("instance {} has no points", inst.id));
            }
            if inst.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(format!("instance {} has a non-finite point", inst.id));
            }
        }
        for &(s, o, _) in &self.triplets {
            if !ids.contains(&s) || !ids.contains(&o) {
                return Err(format!("triplet ({s}, {o}) references an unknown instance"));
            }
        }
        if let Some(v) = &self.vocab {
            v.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn instance(&self, id: u64) -> Option<&GtInstance> {
        self.instances.iter().find(|i| i.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_layout() {
        let text = r#"{"instances":[{"id":4,"class_id":1,"points":[[0,0,0]]},{"id":9,"class_id":0,"points":[[1,0,0]]}],"triplets":[[4,9,2]]}"#;
        let gt: GroundTruthScene = serde_json::from_str(text).unwrap();
        gt.validate().unwrap();
        assert_eq!(gt.triplets, vec![(4, 9, 2)]);
        assert_eq!(
            serde_json::to_string(&gt).unwrap(),
            text.replace("[0,0,0]", "[0.0,0.0,0.0]").replace("[1,0,0]", "[1.0,0.0,0.0]")
        );
    }

    #[test]
    fn invalid_scenes() {
        let inst = |id| GtInstance { id, class_id: 0, points: vec![[0.0; 3]] };
        let dup = GroundTruthScene { instances: vec![inst(1), inst(1)], ..Default::default() };
        assert!(dup.validate().is_err());
        let dangling = GroundTruthScene { instances: vec![inst(1)], triplets: vec![(1, 2, 0)], vocab: None };
        assert!(dangling.validate().is_err());
        let empty = GroundTruthScene { instances: vec![GtInstance { id: 0, class_id: 0, points: vec![] }], ..Default::default() };
        assert!(empty.validate().is_err());
    }
}
