//! Scalar abstraction shared by the geometry and fusion code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable by every numeric routine in the crate: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Elementwise tolerance for rotation orthonormality and unit determinant.
    const ROTATION_TOL: Self;
    /// Smallest eigenvalue still treated as zero when checking positive semi-definiteness.
    const PSD_TOL: Self;

    /// Lossy conversion from an `f64` literal or measurement.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalars convert to f64")
    }
}

impl Real for f32 {
    const ROTATION_TOL: Self = 1e-5;
    const PSD_TOL: Self = 1e-6;
}

impl Real for f64 {
    const ROTATION_TOL: Self = 1e-9;
    const PSD_TOL: Self = 1e-12;
}
