//! Motion attribute proposals.
//!
//! Axis and orientation codecs, the losses a learned attribute head would be
//! trained with, and a geometric candidate generator that stands in for it.

use serde::{Deserialize, Serialize};

use crate::cloud::{
    canonical_direction, centroid, principal_axes, undirected_angle_deg, PointCloud, Vec3,
};
use crate::error::{Error, Result};
use crate::kinematics::{AxisLine, MotionAxis, MotionType, UNIT_TOLERANCE};
use crate::partprop::complement;
use crate::spatial::KdTree;

/// Contacts within this factor of the tightest gap define the contact normal.
const CLOSE_CONTACT_FACTOR: f64 = 1.5;

/// Probabilities below this are clamped before taking logarithms.
pub const PROB_EPSILON: f64 = 1e-12;

/// Discrete orientation classes.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationCodebook {
    entries: Vec<Vec3>,
}

impl OrientationCodebook {
    pub const SIZE: usize = 14;

    /// A custom book: exactly 14 pairwise distinct unit vectors.
    pub fn new(entries: Vec<Vec3>) -> Result<Self> {
        if entries.len() != Self::SIZE {
            return Err(Error::DimensionMismatch {
                expected: Self::SIZE,
                found: entries.len(),
            });
        }
        for (i, e) in entries.iter().enumerate() {
            if (e.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::InvalidAxis(format!(
                    "codebook entry {i} is not unit length"
                )));
            }
            if entries[..i].iter().any(|f| (e - f).norm() < 1e-9) {
                return Err(Error::InvalidAxis(format!(
                    "codebook entry {i} is a duplicate"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Vec3] {
        &self.entries
    }

    pub fn entry(&self, class: usize) -> Vec3 {
        self.entries[class]
    }
}

impl Default for OrientationCodebook {
    /// The six face normals of a cube followed by its eight corner diagonals.
    fn default() -> Self {
        let mut entries = vec![
            Vec3::x(),
            -Vec3::x(),
            Vec3::y(),
            -Vec3::y(),
            Vec3::z(),
            -Vec3::z(),
        ];
        let s = 1.0 / 3f64.sqrt();
        for x in [1.0, -1.0] {
            for y in [1.0, -1.0] {
                for z in [1.0, -1.0] {
                    entries.push(Vec3::new(x, y, z) * s);
                }
            }
        }
        Self { entries }
    }
}

/// A codebook class plus the residual to the exact direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationCode {
    pub class_index: usize,
    pub residual: Vec3,
}

/// Nearest class by dot product (lowest index on ties), residual `v - entry`.
pub fn encode_orientation(v: &Vec3, book: &OrientationCodebook) -> Result<OrientationCode> {
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidAxis(
            "cannot encode a zero or non-finite orientation".into(),
        ));
    }
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidAxis(format!(
            "orientation has norm {norm}, expected 1"
        )));
    }
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (c, e) in book.entries.iter().enumerate() {
        let d = v.dot(e);
        if d > best_dot {
            best_dot = d;
            best = c;
        }
    }
    Ok(OrientationCode {
        class_index: best,
        residual: v - book.entry(best),
    })
}

pub fn decode_orientation(code: &OrientationCode, book: &OrientationCodebook) -> Result<Vec3> {
    if code.class_index >= OrientationCodebook::SIZE {
        return Err(Error::InvalidAxis(format!(
            "class {} is out of range",
            code.class_index
        )));
    }
    let v = book.entry(code.class_index) + code.residual;
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidAxis("code decodes to a zero vector".into()));
    }
    Ok(v / norm)
}

/// Index-codes a line against a cloud.
pub fn encode_axis(line: &AxisLine, cloud: &PointCloud) -> Result<MotionAxis> {
    line.validate()?;
    Ok(MotionAxis::encode(line, cloud))
}

pub fn decode_axis(axis: &MotionAxis, cloud: &PointCloud) -> Result<AxisLine> {
    axis.validate(cloud)?;
    Ok(axis.line(cloud))
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::MalformedDistribution(format!(
            "probability {p} outside [0, 1]"
        )))
    }
}

fn neg_log(p: f64) -> f64 {
    -p.max(PROB_EPSILON).ln()
}

fn check_distribution(probs: &[f64], expected: usize) -> Result<()> {
    if probs.len() != expected {
        return Err(Error::MalformedDistribution(format!(
            "expected {expected} probabilities, found {}",
            probs.len()
        )));
    }
    for &p in probs {
        check_probability(p)?;
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::MalformedDistribution(format!(
            "probabilities sum to {sum}"
        )));
    }
    Ok(())
}

/// Binary cross-entropy of per-point anchor indicators plus the squared error
/// of the displacement predicted for each ground-truth anchor.
pub fn anchor_loss(
    pred_indicator: &[f64],
    gt_indicator: &[bool],
    pred_displacement: &[Vec3],
    gt_displacement: &[Vec3],
) -> Result<f64> {
    if pred_indicator.len() != gt_indicator.len() {
        return Err(Error::DimensionMismatch {
            expected: gt_indicator.len(),
            found: pred_indicator.len(),
        });
    }
    if pred_displacement.len() != gt_displacement.len() {
        return Err(Error::DimensionMismatch {
            expected: gt_displacement.len(),
            found: pred_displacement.len(),
        });
    }
    let mut loss = 0.0;
    for (&p, &y) in pred_indicator.iter().zip(gt_indicator) {
        check_probability(p)?;
        loss += neg_log(if y { p } else { 1.0 - p });
    }
    for (a, b) in pred_displacement.iter().zip(gt_displacement) {
        loss += (a - b).norm_squared();
    }
    Ok(loss)
}

/// Class log-loss over the codebook plus squared residual error.
pub fn orientation_loss(
    class_probs: &[f64],
    pred_residual: &Vec3,
    gt: &OrientationCode,
) -> Result<f64> {
    check_distribution(class_probs, OrientationCodebook::SIZE)?;
    if gt.class_index >= OrientationCodebook::SIZE {
        return Err(Error::InvalidAxis(format!(
            "class {} is out of range",
            gt.class_index
        )));
    }
    Ok(neg_log(class_probs[gt.class_index]) + (pred_residual - gt.residual).norm_squared())
}

/// Log-loss of a distribution over the three motion types.
pub fn type_loss(probs: &[f64], gt: MotionType) -> Result<f64> {
    check_distribution(probs, MotionType::ALL.len())?;
    Ok(neg_log(probs[gt.index()]))
}

/// Where an attribute candidate came from. The order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeSource {
    Pca,
    Contact,
    ContactNormal,
    BboxEdge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeProposal {
    pub motion_type: MotionType,
    pub axis: MotionAxis,
    pub code: OrientationCode,
    pub source: AttributeSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    /// Part points closer than this to the rest of the cloud are contact
    /// points (fraction of the bbox diagonal).
    pub contact_band: f64,
    /// Rotation and translation candidates this close (degrees) also yield an RT candidate.
    pub coaxial_angle_deg: f64,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        Self {
            contact_band: 0.08,
            coaxial_angle_deg: 5.0,
        }
    }
}

/// Part points near the rest of the cloud, each with its nearest outside point.
pub(crate) fn contact_pairs(cloud: &PointCloud, part: &[usize], band: f64) -> Vec<(usize, usize)> {
    let pts = cloud.points();
    let outside = complement(part, pts.len());
    if outside.is_empty() {
        return Vec::new();
    }
    let tree = KdTree::build_subset(pts, &outside);
    part.iter()
        .filter_map(|&i| match tree.nearest(&pts[i]) {
            Some((j, d)) if d < band => Some((i, j)),
            _ => None,
        })
        .collect()
}

/// Geometric axis candidates for one part.
///
/// Lines along the principal axes through the part centroid (as R and T), the
/// principal direction of the contact region and the mean contact normal (both
/// through the centre of the contact gaps, as R), and the twelve edges of the
/// principal bounding box (as R). Coaxial R/T pairs add an RT candidate.
pub fn propose_attributes(
    cloud: &PointCloud,
    part: &[usize],
    config: &AttributeConfig,
    book: &OrientationCodebook,
) -> Result<Vec<AttributeProposal>> {
    let n = cloud.len();
    if part.iter().any(|&i| i >= n) {
        return Err(Error::Domain("part indexes outside the cloud".into()));
    }
    let mut part = part.to_vec();
    part.sort_unstable();
    part.dedup();
    let pts = cloud.points();
    let diag = cloud.bbox_diagonal();
    let part_pts: Vec<Vec3> = part.iter().map(|&i| pts[i]).collect();
    let mut lines: Vec<(MotionType, AxisLine, AttributeSource)> = Vec::new();
    let mut push = |ty, point: Vec3, dir: Vec3, src| {
        let Some(dir) = dir.try_normalize(1e-12) else {
            return;
        };
        if let Ok(line) = AxisLine::new(point, canonical_direction(&dir)) {
            lines.push((ty, line, src));
        }
    };

    let frame = (part_pts.len() >= 4)
        .then(|| principal_axes(&part_pts))
        .flatten()
        .filter(|(_, ev, _)| ev[0] > 1e-12 * diag * diag);
    if let Some((c, _, axes)) = frame {
        for a in axes {
            push(MotionType::Rotation, c, a, AttributeSource::Pca);
            push(MotionType::Translation, c, a, AttributeSource::Pca);
        }
    }

    let contacts = contact_pairs(cloud, &part, config.contact_band * diag);
    if !contacts.is_empty() {
        let mid =
            centroid(contacts.iter().map(|&(i, j)| 0.5 * (pts[i] + pts[j]))).unwrap_or_default();
        let contact_pts: Vec<Vec3> = contacts.iter().map(|&(i, _)| pts[i]).collect();
        if contact_pts.len() >= 2 {
            if let Some((_, ev, axes)) = principal_axes(&contact_pts) {
                if ev[0] > 1e-12 * diag * diag {
                    push(MotionType::Rotation, mid, axes[0], AttributeSource::Contact);
                }
            }
        }
        // the normal comes from the tightest contacts only, where the part actually rests
        let gap = |&(i, j): &(usize, usize)| (pts[j] - pts[i]).norm();
        let tightest = contacts.iter().map(gap).fold(f64::INFINITY, f64::min);
        let close: Vec<(usize, usize)> = contacts
            .iter()
            .copied()
            .filter(|c| gap(c) <= CLOSE_CONTACT_FACTOR * tightest)
            .collect();
        let close_mid =
            centroid(close.iter().map(|&(i, j)| 0.5 * (pts[i] + pts[j]))).unwrap_or(mid);
        let normal: Vec3 = close
            .iter()
            .filter_map(|&(i, j)| (pts[j] - pts[i]).try_normalize(0.0))
            .sum();
        if normal.norm() > 1e-6 * close.len() as f64 {
            push(
                MotionType::Rotation,
                close_mid,
                normal,
                AttributeSource::ContactNormal,
            );
        }
    }

    if let Some((c, _, axes)) = frame {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &part_pts {
            for k in 0..3 {
                let t = (p - c).dot(&axes[k]);
                lo[k] = lo[k].min(t);
                hi[k] = hi[k].max(t);
            }
        }
        for k in 0..3 {
            let (a, b) = ((k + 1) % 3, (k + 2) % 3);
            let mid_k = 0.5 * (lo[k] + hi[k]);
            for sa in [lo[a], hi[a]] {
                for sb in [lo[b], hi[b]] {
                    let point = c + axes[k] * mid_k + axes[a] * sa + axes[b] * sb;
                    push(
                        MotionType::Rotation,
                        point,
                        axes[k],
                        AttributeSource::BboxEdge,
                    );
                }
            }
        }
    }

    let mut screw = Vec::new();
    for (ty, line, src) in &lines {
        if *ty != MotionType::Rotation {
            continue;
        }
        let coaxial = lines.iter().any(|(t2, l2, _)| {
            *t2 == MotionType::Translation
                && undirected_angle_deg(&line.direction, &l2.direction) <= config.coaxial_angle_deg
        });
        if coaxial {
            screw.push((MotionType::RotationTranslation, *line, *src));
        }
    }
    lines.extend(screw);

    let mut out: Vec<AttributeProposal> = Vec::with_capacity(lines.len());
    for (motion_type, line, source) in lines {
        let axis = MotionAxis::encode(&line, cloud);
        if out
            .iter()
            .any(|o| o.motion_type == motion_type && o.axis == axis)
        {
            continue;
        }
        out.push(AttributeProposal {
            motion_type,
            axis,
            code: encode_orientation(&line.direction, book)?,
            source,
        });
    }
    Ok(out)
}
