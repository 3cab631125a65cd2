//! JSON Lines frame streams.

use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox2D, CameraIntrinsics, CameraPose, GeometryError};
use crate::linalg::{vec2, Mat3, Vec3};
use crate::scalar::Real;

use super::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraRecord {
    pub fn intrinsics<T: Real>(&self) -> Result<CameraIntrinsics<T>, GeometryError> {
        CameraIntrinsics::new(T::lit(self.fx), T::lit(self.fy), T::lit(self.cx), T::lit(self.cy), self.width, self.height)
    }

    pub fn from_intrinsics<T: Real>(cam: &CameraIntrinsics<T>) -> Self {
        Self {
            fx: cam.fx.as_f64(),
            fy: cam.fy.as_f64(),
            cx: cam.cx.as_f64(),
            cy: cam.cy.as_f64(),
            width: cam.width,
            height: cam.height,
        }
    }
}

/// Camera-to-world pose, rotation row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl PoseRecord {
    pub fn pose<T: Real>(&self) -> Result<CameraPose<T>, GeometryError> {
        let r: Vec<T> = self.rotation.iter().map(|&v| T::lit(v)).collect();
        let rotation = Mat3::from_row_major(&r).expect("nine entries");
        let translation = Vec3::from_array(self.translation.map(T::lit));
        CameraPose::new(rotation, translation)
    }

    pub fn from_pose<T: Real>(pose: &CameraPose<T>) -> Self {
        let mut rotation = [0.0; 9];
        for (dst, v) in rotation.iter_mut().zip(pose.rotation.iter()) {
            *dst = v.as_f64();
        }
        Self { rotation, translation: pose.translation.to_array().map(|v| v.as_f64()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BboxRecord {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub class_id: usize,
    pub score: f64,
    pub bbox: BboxRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_ref: Option<String>,
}

impl DetectionRecord {
    pub fn bbox<T: Real>(&self) -> BoundingBox2D<T> {
        BoundingBox2D {
            center: vec2(T::lit(self.bbox.cx), T::lit(self.bbox.cy)),
            width: T::lit(self.bbox.w),
            height: T::lit(self.bbox.h),
            score: T::lit(self.score),
            class_id: self.class_id,
        }
    }
}

/// A 2D relation between two detections of the same frame, by local index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub subject: usize,
    pub object: usize,
    pub predicate: usize,
    pub score: f64,
}

/// One frame of pre-computed 2D scene-graph output plus camera state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub camera: CameraRecord,
    pub pose: PoseRecord,
    pub detections: Vec<DetectionRecord>,
    pub relations: Vec<RelationRecord>,
}

impl FrameRecord {
    /// Frame-level structural checks. Per-detection geometry problems (degenerate
    /// boxes, bad depths) are not errors here; the lift drops those detections.
    pub fn validate(&self) -> Result<(), String> {
        self.camera.intrinsics::<f64>().map_err(|e| e.to_string())?;
        self.pose.pose::<f64>().map_err(|e| e.to_string())?;
        for (i, d) in self.detections.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(format!("detection {i}: score {} outside [0,1]", d.score));
            }
            let b = &d.bbox;
            if ![b.cx, b.cy, b.w, b.h].iter().all(|v| v.is_finite()) {
                return Err(format!("detection {i}: non-finite bbox"));
            }
        }
        let n = self.detections.len();
        for (i, r) in self.relations.iter().enumerate() {
            if r.subject >= n || r.object >= n {
                return Err(format!("relation {i}: endpoint ({}, {}) out of range for {n} detections", r.subject, r.object));
            }
            if r.subject == r.object {
                return Err(format!("relation {i}: self relation on detection {}", r.subject));
            }
            if !r.score.is_finite() {
                return Err(format!("relation {i}: non-finite score"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FrameErrorKind {
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("invalid frame: {0}")]
    Invalid(String),
    #[error("frame_id {got} does not follow {prev}")]
    NonMonotone { prev: u64, got: u64 },
}

#[derive(Debug, Error)]
#[error("line {line}: {kind}")]
pub struct FrameError {
    pub line: usize,
    pub kind: FrameErrorKind,
}

impl FrameError {
    /// Fatal errors end the stream; the others only skip one line.
    pub fn is_fatal(&self) -> bool {
        matches!(self.kind, FrameErrorKind::Io(_) | FrameErrorKind::NonMonotone { .. })
    }
}

/// Parses one line, without the cross-frame ordering check.
pub fn parse_frame_line(line: &str) -> Result<FrameRecord, FrameErrorKind> {
    let frame: FrameRecord = serde_json::from_str(line).map_err(|e| FrameErrorKind::Json(e.to_string()))?;
    frame.validate().map_err(FrameErrorKind::Invalid)?;
    Ok(frame)
}

/// Iterator over the frames of a JSON Lines stream.
///
/// Malformed lines yield a recoverable error and the next line is still served.
/// A non-increasing `frame_id` or a read failure ends the stream.
pub struct FrameReader<R> {
    lines: Lines<R>,
    line: usize,
    last_id: Option<u64>,
    done: bool,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line: 0, last_id: None, done: false }
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<FrameRecord, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let raw = self.lines.next()?;
            self.line += 1;
            let line = self.line;
            let text = match raw {
                Ok(t) => t,
                Err(e) => {
                    self.done = true;
                    return Some(Err(FrameError { line, kind: e.into() }));
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            let frame = match parse_frame_line(&text) {
                Ok(f) => f,
                Err(kind) => return Some(Err(FrameError { line, kind })),
            };
            if let Some(prev) = self.last_id {
                if frame.frame_id <= prev {
                    self.done = true;
                    return Some(Err(FrameError { line, kind: FrameErrorKind::NonMonotone { prev, got: frame.frame_id } }));
                }
            }
            self.last_id = Some(frame.frame_id);
            return Some(Ok(frame));
        }
    }
}

pub fn parse_frame_stream(path: impl AsRef<Path>) -> Result<FrameReader<BufReader<File>>, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IoError::open(path, e))?;
    Ok(FrameReader::new(BufReader::new(file)))
}

/// Writes frames in canonical form: compact JSON, one frame per line.
pub fn write_frame_stream<'a, W: Write>(frames: impl IntoIterator<Item = &'a FrameRecord>, mut out: W) -> std::io::Result<()> {
    for frame in frames {
        serde_json::to_writer(&mut out, frame)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
