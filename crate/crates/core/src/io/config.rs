//! Run configuration file: one JSON object, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fusion::{CandidatePolicy, FusionConfig};
use crate::geometry::JacobianMode;
use crate::graph::ClassVocabulary;

use super::IoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hellinger_threshold: f64,
    pub confidence_threshold: f64,
    pub top_k_relations: usize,
    pub min_depth: f64,
    pub jacobian_mode: JacobianMode,
    pub candidate_policy: CandidatePolicy,
    pub record_eval_points: bool,
    pub eval_point_cap: usize,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Directory that `depth_ref` paths are resolved against; defaults to the input's directory.
    pub depth_root: Option<PathBuf>,
    pub bench: bool,
    /// Parse on a reader thread feeding the fuser through a bounded channel.
    pub pipeline: bool,
    pub channel_capacity: usize,
    pub vocab: Option<ClassVocabulary>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FusionConfig::default();
        Self {
            hellinger_threshold: f.hellinger_threshold,
            confidence_threshold: f.confidence_threshold,
            top_k_relations: f.top_k_relations,
            min_depth: f.min_depth,
            jacobian_mode: f.jacobian_mode,
            candidate_policy: f.candidate_policy,
            record_eval_points: f.record_eval_points,
            eval_point_cap: f.eval_point_cap,
            input: None,
            output: None,
            depth_root: None,
            bench: false,
            pipeline: false,
            channel_capacity: 64,
            vocab: None,
        }
    }
}

impl RunConfig {
    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            hellinger_threshold: self.hellinger_threshold,
            confidence_threshold: self.confidence_threshold,
            top_k_relations: self.top_k_relations,
            min_depth: self.min_depth,
            jacobian_mode: self.jacobian_mode,
            candidate_policy: self.candidate_policy,
            record_eval_points: self.record_eval_points,
            eval_point_cap: self.eval_point_cap,
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.fusion().validate().map_err(IoError::Config)?;
        if self.channel_capacity == 0 {
            return Err(IoError::Config("channel_capacity must be positive".into()));
        }
        if let Some(v) = &self.vocab {
            v.validate().map_err(|e| IoError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn read_run_config(path: impl AsRef<Path>) -> Result<RunConfig, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::open(path, e))?;
    RunConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.hellinger_threshold, 0.85);
        assert_eq!(cfg.confidence_threshold, 0.7);
        assert_eq!(cfg.top_k_relations, 10);
        assert_eq!(cfg.eval_point_cap, 256);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"hellinger":0.5}"#), Err(IoError::Config(_))));
    }

    #[test]
    fn out_of_range_values_rejected() {
        for text in [
            r#"{"hellinger_threshold":1.0}"#,
            r#"{"hellinger_threshold":0.0}"#,
            r#"{"confidence_threshold":1.5}"#,
            r#"{"top_k_relations":0}"#,
            r#"{"min_depth":-1.0}"#,
            r#"{"eval_point_cap":0}"#,
        ] {
            assert!(RunConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn modes_parse_from_snake_case() {
        let cfg = RunConfig::from_json(r#"{"jacobian_mode":"pixel","candidate_policy":"global_first"}"#).unwrap();
        assert_eq!(cfg.jacobian_mode, JacobianMode::Pixel);
        assert_eq!(cfg.candidate_policy, CandidatePolicy::GlobalFirst);
    }
}
