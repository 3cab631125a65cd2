use crate::geometry::Gaussian3D;
use crate::graph::{mix_seed, ObjectNode};
use crate::scalar::Real;

use super::FusionError;

/// Moment-matched fusion of two weighted Gaussians:
/// `μ = (wa μa + wb μb)/w`, `Σ = (wa Σa + wb Σb)/w + wa wb (μa−μb)(μa−μb)ᵀ / w²`.
pub fn merge_moments<T: Real>(a: &Gaussian3D<T>, wa: T, b: &Gaussian3D<T>, wb: T) -> Gaussian3D<T> {
    let w = wa + wb;
    let mean = (a.mean.scale(wa) + b.mean.scale(wb)).scale(T::one() / w);
    let d = a.mean - b.mean;
    let spread = d.outer(&d).scale(wa * wb / (w * w));
    let cov = (a.cov.scale(wa) + b.cov.scale(wb)).scale(T::one() / w) + spread;
    let cov = cov.clamp_psd(T::PSD_TOL).unwrap_or_else(|| cov.symmetrize());
    Gaussian3D { mean, cov }
}

/// Fuses two same-class nodes. The result keeps `a`'s id; weights, scores and
/// evaluation points are pooled.
pub fn merge_gaussians<T: Real>(
    a: &ObjectNode<T>,
    b: &ObjectNode<T>,
    eval_point_cap: usize,
) -> Result<ObjectNode<T>, FusionError> {
    if a.class_id != b.class_id {
        return Err(FusionError::ClassMismatch(a.class_id, b.class_id));
    }
    if a.weight == 0 || b.weight == 0 {
        return Err(FusionError::ZeroWeight);
    }
    let gaussian = merge_moments(&a.gaussian, T::lit(a.weight as f64), &b.gaussian, T::lit(b.weight as f64));
    let seed = mix_seed(&[a.id.0, b.id.0, a.eval_points.seen, b.eval_points.seen]);
    Ok(ObjectNode {
        id: a.id,
        class_id: a.class_id,
        gaussian,
        weight: a.weight + b.weight,
        score_sum: a.score_sum + b.score_sum,
        eval_points: a.eval_points.merge(&b.eval_points, eval_point_cap, seed),
    })
}
