//! File formats: frame streams, raw depth maps, run configuration, ground truth.

mod config;
mod depth;
mod frames;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{read_run_config, RunConfig};
pub use depth::{
    read_depth_map, sample_centroid_depth, write_depth_map, DepthDirectory, DepthError, DepthMap, DepthSource, InMemoryDepth,
    NoDepth, DEPTH_MAGIC, DEPTH_VERSION,
};
pub use frames::{
    parse_frame_line, parse_frame_stream, write_frame_stream, BboxRecord, CameraRecord, DetectionRecord, FrameError,
    FrameErrorKind, FrameReader, FrameRecord, PoseRecord, RelationRecord,
};

use crate::eval::GroundTruthScene;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl IoError {
    pub(crate) fn open(path: &Path, source: std::io::Error) -> Self {
        Self::Open { path: path.to_owned(), source }
    }

    pub(crate) fn write(path: &Path, source: std::io::Error) -> Self {
        Self::Write { path: path.to_owned(), source }
    }
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthScene, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::open(path, e))?;
    let gt: GroundTruthScene = serde_json::from_str(&text)?;
    gt.validate().map_err(IoError::Format)?;
    Ok(gt)
}

pub fn write_ground_truth(path: impl AsRef<Path>, gt: &GroundTruthScene) -> Result<(), IoError> {
    let path = path.as_ref();
    let text = serde_json::to_string(gt)?;
    fs::write(path, text).map_err(|e| IoError::write(path, e))
}

/// Serializes any value as pretty JSON to a file.
pub fn write_json<S: serde::Serialize>(path: impl AsRef<Path>, value: &S) -> Result<(), IoError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| IoError::write(path, e))
}
