//! Projective and Gaussian geometry: lifting a 2D detection with a centroid
//! depth and a camera pose into a world-frame 3D Gaussian.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{vec3, Mat2, Mat2x3, Mat3, Mat3x2, Vec2, Vec3};
use crate::scalar::Real;

/// Depth below which a centroid is rejected (meters).
pub const DEFAULT_MIN_DEPTH: f64 = 1e-4;

/// Largest accepted condition number of `J·Jᵀ` before the pseudo-inverse is refused.
pub const MAX_JACOBIAN_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("singular projection jacobian (condition number {0:e})")]
    SingularJacobian(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid camera pose: {0}")]
    InvalidPose(String),
}

/// Where the projection Jacobian is linearized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// At the camera-frame point `z·K⁻¹(p, 1)`, the usual EWA linearization.
    #[default]
    CameraFrame,
    /// Substituting the raw pixel coordinates of the bbox center for `x` and `y`.
    Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self, GeometryError> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter".into()));
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be positive".into()));
        }
        Ok(())
    }

    /// Camera-frame point at depth `z` on the ray through pixel `p`, i.e. `z·K⁻¹(p, 1)`.
    #[inline]
    pub fn unproject(&self, p: &Vec2<T>, z: T) -> Vec3<T> {
        vec3((p.x() - self.cx) / self.fx * z, (p.y() - self.cy) / self.fy * z, z)
    }

    /// Pixel coordinates of a camera-frame point; `None` behind the camera.
    pub fn project(&self, point: &Vec3<T>) -> Option<Vec2<T>> {
        if point.z() <= T::zero() {
            return None;
        }
        Some(crate::linalg::vec2(self.fx * point.x() / point.z() + self.cx, self.fy * point.y() / point.z() + self.cy))
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> CameraPose<T> {
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self, GeometryError> {
        let pose = Self { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.rotation.is_finite() || !self.translation.is_finite() {
            return Err(GeometryError::InvalidPose("non-finite entry".into()));
        }
        let ortho = (self.rotation.transpose() * self.rotation).max_abs_diff(&Mat3::identity());
        if ortho > T::ROTATION_TOL {
            return Err(GeometryError::InvalidPose(format!("rotation not orthonormal ({:e})", ortho.as_f64())));
        }
        let det = self.rotation.determinant();
        if (det - T::one()).abs() > T::ROTATION_TOL {
            return Err(GeometryError::InvalidPose(format!("rotation determinant {det}")));
        }
        Ok(())
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation * *p + self.translation
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.transpose() * (*p - self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox2D<T> {
    pub center: Vec2<T>,
    pub width: T,
    pub height: T,
    pub score: T,
    pub class_id: usize,
}

impl<T: Real> BoundingBox2D<T> {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.width > T::zero() && self.height > T::zero()) {
            return Err(GeometryError::InvalidDetection(format!("non-positive extent {}x{}", self.width, self.height)));
        }
        if !self.center.is_finite() || !self.width.is_finite() || !self.height.is_finite() {
            return Err(GeometryError::InvalidDetection("non-finite box".into()));
        }
        if !(self.score >= T::zero() && self.score <= T::one()) {
            return Err(GeometryError::InvalidDetection(format!("score {} outside [0,1]", self.score)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2D<T> {
    pub mean: Vec2<T>,
    pub cov: Mat2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D<T> {
    pub mean: Vec3<T>,
    pub cov: Mat3<T>,
}

impl<T: Real> Gaussian3D<T> {
    pub fn new(mean: Vec3<T>, cov: Mat3<T>) -> Self {
        Self { mean, cov }
    }

    pub fn is_psd(&self) -> bool {
        let scale = self.cov.max_abs().max(T::one());
        self.cov.asymmetry() <= T::PSD_TOL * scale
            && (self.cov.principal_minors_nonnegative() || self.cov.min_eigenvalue() >= -T::PSD_TOL * scale)
    }
}

/// Linearized projection at a camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionJacobian<T> {
    pub j: Mat2x3<T>,
    pub z: T,
}

/// A bbox read as a uniform distribution: mean at the center, `diag(W², H²)/12`.
pub fn bbox_to_gaussian2d<T: Real>(bbox: &BoundingBox2D<T>) -> Result<Gaussian2D<T>, GeometryError> {
    bbox.validate()?;
    let twelfth = T::one() / T::lit(12.0);
    Ok(Gaussian2D {
        mean: bbox.center,
        cov: Mat2::from_diagonal([bbox.width * bbox.width * twelfth, bbox.height * bbox.height * twelfth]),
    })
}

fn check_depth<T: Real>(z: T, min_depth: T) -> Result<(), GeometryError> {
    if !z.is_finite() || z < min_depth || z <= T::zero() {
        return Err(GeometryError::InvalidDepth(z.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

/// `R·K⁻¹·(p, 1)·z + t`.
pub fn backproject_mean<T: Real>(
    p: &Vec2<T>,
    z: T,
    cam: &CameraIntrinsics<T>,
    pose: &CameraPose<T>,
) -> Result<Vec3<T>, GeometryError> {
    check_depth(z, T::zero())?;
    Ok(pose.camera_to_world(&cam.unproject(p, z)))
}

/// Jacobian of perspective projection at a camera-frame point.
pub fn projection_jacobian<T: Real>(
    cam_point: &Vec3<T>,
    cam: &CameraIntrinsics<T>,
) -> Result<ProjectionJacobian<T>, GeometryError> {
    projection_jacobian_with_min_depth(cam_point, cam, T::lit(DEFAULT_MIN_DEPTH))
}

pub fn projection_jacobian_with_min_depth<T: Real>(
    cam_point: &Vec3<T>,
    cam: &CameraIntrinsics<T>,
    min_depth: T,
) -> Result<ProjectionJacobian<T>, GeometryError> {
    let (x, y, z) = (cam_point.x(), cam_point.y(), cam_point.z());
    check_depth(z, min_depth)?;
    if !x.is_finite() || !y.is_finite() {
        return Err(GeometryError::InvalidDetection("non-finite camera point".into()));
    }
    let z2 = z * z;
    let j = Mat2x3::from_rows([[cam.fx / z, T::zero(), -cam.fx * x / z2], [T::zero(), cam.fy / z, -cam.fy * y / z2]]);
    Ok(ProjectionJacobian { j, z })
}

/// `Jᵀ(JJᵀ)⁻¹`, refused when `JJᵀ` is too badly conditioned.
pub fn jacobian_pseudoinverse<T: Real>(jac: &ProjectionJacobian<T>) -> Result<Mat3x2<T>, GeometryError> {
    let jt = jac.j.transpose();
    let gram: Mat2<T> = jac.j * jt;
    let [lo, hi] = gram.symmetric_eigenvalues();
    let cond = if lo > T::zero() { hi / lo } else { T::infinity() };
    if !cond.is_finite() || cond > T::lit(MAX_JACOBIAN_CONDITION) {
        return Err(GeometryError::SingularJacobian(cond.to_f64().unwrap_or(f64::INFINITY)));
    }
    let inv = gram.inverse().ok_or(GeometryError::SingularJacobian(f64::INFINITY))?;
    Ok(jt * inv)
}

/// Camera-frame covariance before rotation: `J⁺·Σ₂·J⁺ᵀ` plus a depth variance equal
/// to the mean of its first two diagonal entries.
pub fn camera_frame_covariance<T: Real>(cov2d: &Mat2<T>, jac: &ProjectionJacobian<T>) -> Result<Mat3<T>, GeometryError> {
    let pinv = jacobian_pseudoinverse(jac)?;
    let mut cov = Mat2::conjugate(&pinv, cov2d);
    let depth_var = (cov[(0, 0)] + cov[(1, 1)]) * T::lit(0.5);
    cov[(2, 2)] += depth_var;
    Ok(cov)
}

/// World-frame covariance `R·Σ′·Rᵀ`, symmetrized and clamped to PSD.
pub fn backproject_covariance<T: Real>(
    cov2d: &Mat2<T>,
    jac: &ProjectionJacobian<T>,
    pose: &CameraPose<T>,
) -> Result<Mat3<T>, GeometryError> {
    let cam_cov = camera_frame_covariance(cov2d, jac)?;
    let world = Mat3::conjugate(&pose.rotation, &cam_cov);
    world.clamp_psd(T::PSD_TOL).ok_or_else(|| GeometryError::InvalidDetection("covariance is not positive semi-definite".into()))
}

#[derive(Debug, Clone, Copy)]
pub struct LiftOptions<T> {
    pub min_depth: T,
    pub jacobian_mode: JacobianMode,
}

impl<T: Real> Default for LiftOptions<T> {
    fn default() -> Self {
        Self { min_depth: T::lit(DEFAULT_MIN_DEPTH), jacobian_mode: JacobianMode::CameraFrame }
    }
}

/// Jacobian for a detection under the chosen linearization.
pub fn detection_jacobian<T: Real>(
    center: &Vec2<T>,
    z: T,
    cam: &CameraIntrinsics<T>,
    opts: &LiftOptions<T>,
) -> Result<ProjectionJacobian<T>, GeometryError> {
    let point = match opts.jacobian_mode {
        JacobianMode::CameraFrame => cam.unproject(center, z),
        JacobianMode::Pixel => vec3(center.x(), center.y(), z),
    };
    projection_jacobian_with_min_depth(&point, cam, opts.min_depth)
}

/// Full lift of one detection into a world-frame Gaussian.
pub fn lift_detection<T: Real>(
    bbox: &BoundingBox2D<T>,
    z: T,
    cam: &CameraIntrinsics<T>,
    pose: &CameraPose<T>,
    opts: &LiftOptions<T>,
) -> Result<Gaussian3D<T>, GeometryError> {
    let g2 = bbox_to_gaussian2d(bbox)?;
    check_depth(z, opts.min_depth)?;
    let mean = backproject_mean(&g2.mean, z, cam, pose)?;
    let jac = detection_jacobian(&g2.mean, z, cam, opts)?;
    let cov = backproject_covariance(&g2.cov, &jac, pose)?;
    Ok(Gaussian3D { mean, cov })
}
