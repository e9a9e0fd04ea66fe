use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AnnotatedMotion, Annotation};
use crate::cloud::{PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::kinematics::{motion_isometry, AxisLine, MotionAmount};

/// Largest pose reached by motion augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentLimits {
    pub max_rotation_deg: f64,
    /// Fraction of the bbox diagonal.
    pub max_translation: f64,
}

impl Default for AugmentLimits {
    fn default() -> Self {
        Self {
            max_rotation_deg: 90.0,
            max_translation: 0.15,
        }
    }
}

/// Re-poses every mobility of `ann` at evenly spaced amounts from zero to the limits.
///
/// Output order is mobility-major (document order), then pose. Motions listed
/// after the posed one on the same part ride along with it; earlier ones and
/// all other parts stay put. Ids get a `_m{mobility}_p{pose}` suffix.
pub fn augment_motion(
    ann: &Annotation,
    poses: usize,
    limits: &AugmentLimits,
) -> Result<Vec<Annotation>> {
    if poses == 0 {
        return Err(Error::Domain(
            "poses per mobility must be at least 1".into(),
        ));
    }
    if !(limits.max_rotation_deg >= 0.0 && limits.max_translation >= 0.0) {
        return Err(Error::Domain(
            "augmentation limits must be non-negative".into(),
        ));
    }
    ann.validate()?;
    let diag = ann.cloud.bbox_diagonal();
    let mut out = Vec::new();
    let mut mobility = 0usize;
    for (pi, part) in ann.parts.iter().enumerate() {
        for (mi, m) in part.motions.iter().enumerate() {
            for k in 0..poses {
                let f = if poses == 1 {
                    0.0
                } else {
                    k as f64 / (poses - 1) as f64
                };
                let amount = MotionAmount {
                    angle_deg: f * limits.max_rotation_deg,
                    distance: f * limits.max_translation * diag,
                };
                let iso = motion_isometry(&m.line, m.motion_type, amount);
                let mut points = ann.cloud.points().to_vec();
                let mut normals = ann.cloud.normals().map(|n| n.to_vec());
                for &i in &part.indices {
                    points[i] = (iso * nalgebra::Point3::from(points[i])).coords;
                    if let Some(ns) = normals.as_mut() {
                        ns[i] = iso.rotation * ns[i];
                    }
                }
                let mut posed = ann.clone();
                posed.shape_id = format!("{}_m{}_p{}", ann.shape_id, mobility, k);
                posed.cloud = PointCloud::new(points, normals)?;
                for later in posed.parts[pi].motions.iter_mut().skip(mi + 1) {
                    *later = AnnotatedMotion {
                        motion_type: later.motion_type,
                        line: AxisLine {
                            point: (iso * nalgebra::Point3::from(later.line.point)).coords,
                            direction: iso.rotation * later.line.direction,
                        },
                    };
                }
                posed.validate()?;
                out.push(posed);
            }
            mobility += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterParams {
    /// Gaussian noise standard deviation as a fraction of the bbox diagonal.
    pub sigma: f64,
    /// Per-axis scale factors are drawn uniformly from this closed range.
    pub scale_range: (f64, f64),
}

impl Default for JitterParams {
    fn default() -> Self {
        Self {
            sigma: 0.005,
            scale_range: (0.9, 1.1),
        }
    }
}

/// Anisotropic scaling followed by isotropic point noise. Axes are scaled with
/// the shape (directions renormalised); normals follow the inverse transpose.
pub fn jitter(ann: &Annotation, params: &JitterParams, seed: u64) -> Result<Annotation> {
    let (lo, hi) = params.scale_range;
    if !(params.sigma >= 0.0 && params.sigma.is_finite()) {
        return Err(Error::Domain("sigma must be a non-negative number".into()));
    }
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::Domain(
            "scale range must be positive and ordered".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = Vec3::from_fn(|_, _| rng.random_range(lo..=hi));
    let noise = Normal::new(0.0, params.sigma * ann.cloud.bbox_diagonal())
        .map_err(|e| Error::Domain(e.to_string()))?;

    let points: Vec<Vec3> = ann
        .cloud
        .points()
        .iter()
        .map(|p| {
            let q = p.component_mul(&s);
            q + Vec3::from_fn(|_, _| noise.sample(&mut rng))
        })
        .collect();
    let normals = ann
        .cloud
        .normals()
        .map(|ns| ns.iter().map(|n| n.component_div(&s).normalize()).collect());

    let mut out = ann.clone();
    out.cloud = PointCloud::new(points, normals)?;
    for part in &mut out.parts {
        for m in &mut part.motions {
            m.line = AxisLine {
                point: m.line.point.component_mul(&s),
                direction: m.line.direction.component_mul(&s).normalize(),
            };
        }
    }
    Ok(out)
}
