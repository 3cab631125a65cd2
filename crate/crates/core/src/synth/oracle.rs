use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::Gaussian3D;
use crate::linalg::{Mat3, Vec3};

use super::SynthError;

/// Empirical mean and covariance of `n_samples` draws from the mixture
/// `wa/(wa+wb)·N(a) + wb/(wa+wb)·N(b)`.
pub fn mixture_moment_oracle(
    a: &Gaussian3D<f64>,
    wa: f64,
    b: &Gaussian3D<f64>,
    wb: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(Vec3<f64>, Mat3<f64>), SynthError> {
    if !(wa > 0.0 && wb > 0.0 && wa.is_finite() && wb.is_finite()) {
        return Err(SynthError::InvalidSpec(format!("mixture weights {wa}, {wb} must be positive")));
    }
    if n_samples < 2 {
        return Err(SynthError::InvalidSpec("need at least two samples".into()));
    }
    let chol = |g: &Gaussian3D<f64>| {
        g.cov.cholesky().ok_or_else(|| SynthError::InvalidSpec("component covariance is not positive definite".into()))
    };
    let (la, lb) = (chol(a)?, chol(b)?);
    let pa = wa / (wa + wb);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Shifted accumulation around the weighted mean keeps the sums well conditioned.
    let shift = (a.mean.scale(wa) + b.mean.scale(wb)).scale(1.0 / (wa + wb));
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [[0.0f64; 3]; 3];
    for _ in 0..n_samples {
        let (mean, l) = if rng.random_bool(pa) { (&a.mean, &la) } else { (&b.mean, &lb) };
        let z: Vec3<f64> = Vec3::from_array([rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)]);
        let x = *mean + *l * z - shift;
        for i in 0..3 {
            sum[i] += x[i];
            for j in i..3 {
                sum_sq[i][j] += x[i] * x[j];
            }
        }
    }
    let n = n_samples as f64;
    let m: [f64; 3] = sum.map(|s| s / n);
    let mut cov = Mat3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let c = (sum_sq[i][j] - n * m[i] * m[j]) / (n - 1.0);
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    Ok((Vec3::from_array(m) + shift, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vec3;

    #[test]
    fn equal_weights_match_closed_form() {
        let a = Gaussian3D::new(vec3(0.0, 0.0, 0.0), Mat3::identity());
        let b = Gaussian3D::new(vec3(2.0, 0.0, 0.0), Mat3::identity());
        let (m, c) = mixture_moment_oracle(&a, 1.0, &b, 1.0, 200_000, 1).unwrap();
        assert!(m.max_abs_diff(&vec3(1.0, 0.0, 0.0)) < 0.02);
        assert!(c.max_abs_diff(&Mat3::from_diagonal([2.0, 1.0, 1.0])) < 0.03);
    }

    #[test]
    fn zero_weight_rejected() {
        let a = Gaussian3D::new(vec3(0.0, 0.0, 0.0), Mat3::identity());
        assert!(mixture_moment_oracle(&a, 1.0, &a, 0.0, 100_000, 1).is_err());
    }
}
