use crate::geometry::Gaussian3D;
use crate::scalar::Real;

use super::FusionError;

/// Determinant below which the averaged covariance is treated as singular.
pub const MIN_COVARIANCE_DET: f64 = 1e-30;

/// Bhattacharyya distance between two Gaussians:
/// `⅛ Δμᵀ Σ⁻¹ Δμ + ½ ln(det Σ / √(det Σa · det Σb))` with `Σ = (Σa + Σb)/2`.
pub fn bhattacharyya<T: Real>(a: &Gaussian3D<T>, b: &Gaussian3D<T>) -> Result<T, FusionError> {
    let avg = (a.cov + b.cov).scale(T::lit(0.5));
    let det = avg.determinant();
    let det_a = a.cov.determinant();
    let det_b = b.cov.determinant();
    let floor = T::lit(MIN_COVARIANCE_DET);
    if !(det > floor && det_a > floor && det_b > floor) {
        return Err(FusionError::DegenerateCovariance(det.as_f64().min(det_a.as_f64()).min(det_b.as_f64())));
    }
    let inv = avg.inverse().ok_or(FusionError::DegenerateCovariance(det.as_f64()))?;
    let d = a.mean - b.mean;
    let mahalanobis = (d.transpose() * inv * d)[(0, 0)];
    // ln(det / sqrt(det_a det_b)) split into logs to keep tiny determinants in range.
    let shape = det.ln() - T::lit(0.5) * (det_a.ln() + det_b.ln());
    let dist = mahalanobis / T::lit(8.0) + T::lit(0.5) * shape;
    if !dist.is_finite() {
        return Err(FusionError::DegenerateCovariance(det.as_f64()));
    }
    // Both terms are non-negative in exact arithmetic.
    Ok(dist.max(T::zero()))
}

/// Hellinger distance `√(1 − exp(−B))`, in `[0, 1)`.
pub fn hellinger<T: Real>(a: &Gaussian3D<T>, b: &Gaussian3D<T>) -> Result<T, FusionError> {
    let bd = bhattacharyya(a, b)?;
    Ok(hellinger_from_bhattacharyya(bd))
}

#[inline]
pub fn hellinger_from_bhattacharyya<T: Real>(bd: T) -> T {
    // 1 - exp(-B) via exp_m1 keeps precision for small B.
    (-(-bd).exp_m1()).max(T::zero()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{vec3, Mat3};

    fn g(mean: [f64; 3], var: f64) -> Gaussian3D<f64> {
        Gaussian3D::new(vec3(mean[0], mean[1], mean[2]), Mat3::from_diagonal([var; 3]))
    }

    #[test]
    fn identical_gaussians_have_zero_distance() {
        let a = Gaussian3D::new(vec3(1.0, 2.0, 3.0), Mat3::from_rows([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 0.5]]));
        assert_eq!(bhattacharyya(&a, &a).unwrap(), 0.0);
        assert_eq!(hellinger(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_examples() {
        // (1/8)·4 = 0.5
        let b = bhattacharyya(&g([0.0; 3], 1.0), &g([2.0, 0.0, 0.0], 1.0)).unwrap();
        assert!((b - 0.5).abs() < 1e-12);
        let h = hellinger(&g([0.0; 3], 1.0), &g([2.0, 0.0, 0.0], 1.0)).unwrap();
        assert!((h - (1.0 - (-0.5f64).exp()).sqrt()).abs() < 1e-12);
        assert!((h - 0.627271).abs() < 1e-6);

        // det(2.5 I) = 15.625, sqrt(det I · det 4I) = 8
        let b = bhattacharyya(&g([0.0; 3], 1.0), &g([0.0; 3], 4.0)).unwrap();
        assert!((b - 0.5 * (15.625f64 / 8.0).ln()).abs() < 1e-12);
        assert!((b - 0.33471).abs() < 1e-5);
        let h = hellinger(&g([0.0; 3], 1.0), &g([0.0; 3], 4.0)).unwrap();
        assert!((h - (1.0 - (-b).exp()).sqrt()).abs() < 1e-12);
        assert!((h - 0.533346).abs() < 1e-6);
    }

    #[test]
    fn singular_covariance_rejected() {
        let flat = Gaussian3D::new(vec3(0.0, 0.0, 0.0), Mat3::from_diagonal([1.0, 1.0, 0.0]));
        assert!(matches!(bhattacharyya(&flat, &flat), Err(FusionError::DegenerateCovariance(_))));
        assert!(hellinger(&flat, &g([0.0; 3], 1.0)).is_err());
    }
}
