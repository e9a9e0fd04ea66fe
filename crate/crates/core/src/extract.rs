//! Final mobility extraction: part suppression and per-part attribute selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bench::iou;
use crate::cloud::undirected_angle_deg;
use crate::error::{Error, Result};
use crate::kinematics::MotionType;
use crate::matching::MobilityProposal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Parts overlapping an accepted part by more than this are suppressed.
    pub part_overlap_iou: f64,
    /// Pool entries overlapping a kept part by more than this lend it attributes.
    pub attribute_collection_iou: f64,
    /// Minimum angle (degrees) between two rotation axes of one part.
    pub rotation_angle_min: f64,
    /// Report a coaxial rotation and translation pair as one RT mobility.
    pub merge_coaxial: bool,
    /// Angle (degrees) within which a rotation and a translation count as coaxial.
    pub coaxial_angle_deg: f64,
    /// A rotation beyond the first is only taken when its error is at most this
    /// multiple of the first one's.
    pub extra_rotation_ratio: Option<f64>,
    /// A part that rotates may only translate along a rotation axis.
    pub coaxial_translation_only: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            part_overlap_iou: 0.5,
            attribute_collection_iou: 0.5,
            rotation_angle_min: 45.0,
            merge_coaxial: false,
            coaxial_angle_deg: 5.0,
            extra_rotation_ratio: None,
            coaxial_translation_only: false,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if !unit(self.part_overlap_iou) || !unit(self.attribute_collection_iou) {
            return Err(Error::Domain(
                "extraction IoU thresholds must lie in (0, 1]".into(),
            ));
        }
        if !(self.rotation_angle_min > 0.0 && self.rotation_angle_min <= 90.0) {
            return Err(Error::Domain(
                "rotation_angle_min must lie in (0, 90]".into(),
            ));
        }
        if self.extra_rotation_ratio.is_some_and(|r| !(r >= 1.0)) {
            return Err(Error::Domain(
                "extra_rotation_ratio must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Total order on proposals: error, then part (smallest member first), then
/// type and axis, so results never depend on input order.
pub fn proposal_order(a: &MobilityProposal, b: &MobilityProposal) -> Ordering {
    let (ma, mb) = (&a.mobility, &b.mobility);
    let vec_cmp = |x: &crate::Vec3, y: &crate::Vec3| {
        x.iter()
            .zip(y.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    };
    a.matching_error
        .total_cmp(&b.matching_error)
        .then_with(|| ma.part().cmp(mb.part()))
        .then_with(|| ma.motion_type.index().cmp(&mb.motion_type.index()))
        .then_with(|| a.source.cmp(&b.source))
        .then_with(|| ma.axis.anchor_index.cmp(&mb.axis.anchor_index))
        .then_with(|| vec_cmp(&ma.axis.orientation, &mb.axis.orientation))
        .then_with(|| vec_cmp(&ma.axis.displacement, &mb.axis.displacement))
        .then_with(|| a.confidence.total_cmp(&b.confidence))
}

/// Greedy suppression: lowest error first, accepted while its part overlaps
/// every accepted part by at most `part_overlap_iou`.
pub fn nms_parts(
    proposals: &[MobilityProposal],
    config: &ExtractionConfig,
) -> Vec<MobilityProposal> {
    let mut sorted = proposals.to_vec();
    sorted.sort_by(proposal_order);
    let mut kept: Vec<MobilityProposal> = Vec::new();
    for p in sorted {
        if kept
            .iter()
            .all(|k| iou(k.mobility.part(), p.mobility.part()) <= config.part_overlap_iou)
        {
            kept.push(p);
        }
    }
    kept
}

/// Attributes for one kept part, drawn from every pool entry that overlaps it.
///
/// At most one translation (the lowest eligible error) survives. Rotation axes
/// are taken greedily by error, skipping any within `rotation_angle_min` of one
/// already taken. RT entries take part in both selections. Every output carries the
/// kept part's point set.
pub fn select_attributes(
    kept: &MobilityProposal,
    pool: &[MobilityProposal],
    config: &ExtractionConfig,
) -> Vec<MobilityProposal> {
    let mut group: Vec<MobilityProposal> = pool
        .iter()
        .filter(|p| iou(p.mobility.part(), kept.mobility.part()) > config.attribute_collection_iou)
        .cloned()
        .collect();
    if !group.contains(kept) {
        group.push(kept.clone());
    }
    group.sort_by(proposal_order);

    let retyped = |p: &MobilityProposal, ty: MotionType| MobilityProposal {
        mobility: kept.mobility.with_motion(ty, p.mobility.axis),
        ..p.clone()
    };

    let mut rotations: Vec<MobilityProposal> = Vec::new();
    for p in group
        .iter()
        .filter(|p| p.mobility.motion_type.has_rotation())
    {
        let dir = p.mobility.axis.orientation;
        let within_ratio = match (rotations.first(), config.extra_rotation_ratio) {
            (Some(first), Some(ratio)) => p.matching_error <= ratio * first.matching_error,
            _ => true,
        };
        if within_ratio
            && rotations.iter().all(|r| {
                undirected_angle_deg(&r.mobility.axis.orientation, &dir) > config.rotation_angle_min
            })
        {
            rotations.push(retyped(p, MotionType::Rotation));
        }
    }
    let coaxial_with = |t: &MobilityProposal, r: &MobilityProposal| {
        undirected_angle_deg(&r.mobility.axis.orientation, &t.mobility.axis.orientation)
            <= config.coaxial_angle_deg
    };
    let translation = group
        .iter()
        .filter(|p| p.mobility.motion_type.has_translation())
        .find(|p| {
            !config.coaxial_translation_only
                || rotations.is_empty()
                || rotations.iter().any(|r| coaxial_with(p, r))
        })
        .map(|p| retyped(p, MotionType::Translation));

    let mut out = rotations;
    if let Some(t) = translation {
        let coaxial = if config.merge_coaxial {
            out.iter().position(|r| coaxial_with(&t, r))
        } else {
            None
        };
        match coaxial {
            Some(i) => {
                let r = &out[i];
                out[i] = retyped(r, MotionType::RotationTranslation);
            }
            None => out.push(t),
        }
    }
    out
}

/// Suppression followed by attribute selection for every kept part.
pub fn extract_mobilities(
    pool: &[MobilityProposal],
    config: &ExtractionConfig,
) -> Vec<MobilityProposal> {
    nms_parts(pool, config)
        .iter()
        .flat_map(|k| select_attributes(k, pool, config))
        .collect()
}
