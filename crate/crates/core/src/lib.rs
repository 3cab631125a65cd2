//! Streaming construction of 3D semantic scene graphs.
//!
//! Each frame's 2D detections are lifted into world-frame Gaussians using the
//! centroid depth and camera pose, collected into a local graph, and fused into
//! a global graph by Hellinger-gated moment matching. Relations are carried as
//! per-predicate votes on directed edges.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the file formats and tools use.

pub mod bench;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod scalar;
pub mod synth;

pub use scalar::Real;

pub type Gaussian = geometry::Gaussian3D<f64>;
pub type Intrinsics = geometry::CameraIntrinsics<f64>;
pub type Pose = geometry::CameraPose<f64>;
pub type BoundingBox = geometry::BoundingBox2D<f64>;
pub type Node = graph::ObjectNode<f64>;
pub type Graph = graph::GlobalSsg<f64>;
pub type LocalGraph = graph::LocalSsg<f64>;
pub type Engine = fusion::FusionEngine<f64>;
