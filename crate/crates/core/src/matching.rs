//! Scoring (part, attribute) combinations.
//!
//! The matching score compares the normalised displacement fields of two
//! mobilities. Without ground truth, combinations are ranked by a plausibility
//! energy: how much moving the part tears or squeezes its contact with the
//! static rest of the shape.

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attrprop::{AttributeProposal, AttributeSource};
use crate::cloud::{PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::kinematics::{motion_isometry, move_field, Mobility, MoveAmounts};
use crate::partprop::{complement, PartProposal};
use crate::refine::SnapshotSchedule;
use crate::spatial::KdTree;

/// A candidate mobility with its scores. Lower error is better.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityProposal {
    pub mobility: Mobility,
    pub confidence: f64,
    pub matching_error: f64,
    pub source: AttributeSource,
}

/// Mean over all cloud points of the distance between the two normalised
/// displacement fields.
pub fn matching_score(
    cloud: &PointCloud,
    a: &Mobility,
    b: &Mobility,
    amounts: &MoveAmounts,
) -> f64 {
    let n = cloud.len();
    if n == 0 {
        return 0.0;
    }
    let fa = move_field(cloud, a, amounts);
    let fb = move_field(cloud, b, amounts);
    fa.iter().zip(&fb).map(|(x, y)| (x - y).norm()).sum::<f64>() / n as f64
}

/// Absolute error of a predicted score against the true score.
pub fn matching_score_loss(
    predicted: f64,
    cloud: &PointCloud,
    proposal: &Mobility,
    gt: &Mobility,
    amounts: &MoveAmounts,
) -> Result<f64> {
    if !(predicted >= 0.0) {
        return Err(Error::Domain("predicted score must be non-negative".into()));
    }
    Ok((predicted - matching_score(cloud, proposal, gt, amounts)).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    /// Static points closer than this to the part are in contact (fraction of diag).
    pub contact_band: f64,
    /// Per-point distance change is clamped here (fraction of diag).
    pub clamp: f64,
    /// Pure translations whose contact pushes mostly one way get the no-contact
    /// penalty: the mean projected unit contact vector must stay at or below this.
    pub confinement: f64,
    pub schedule: SnapshotSchedule,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            contact_band: 0.08,
            clamp: 0.1,
            confinement: 0.5,
            schedule: SnapshotSchedule::default(),
        }
    }
}

/// Energy of a part with no contact, or of a slide that nothing guides.
pub const NO_CONTACT_PENALTY: f64 = 1.0;

struct Contact {
    point: Vec3,
    distance: f64,
    /// Unit vector from the nearest part point.
    direction: Vec3,
}

/// Geometry shared by every energy evaluation of one part.
pub(crate) struct ContactFrame {
    part_tree: KdTree,
    contacts: Vec<Contact>,
    diag: f64,
}

impl ContactFrame {
    pub(crate) fn new(cloud: &PointCloud, part: &[usize], band: f64) -> Result<Self> {
        let n = cloud.len();
        if part.is_empty() {
            return Err(Error::Domain("part is empty".into()));
        }
        if part.len() >= n {
            return Err(Error::Domain(
                "part covers the whole cloud; nothing stays static".into(),
            ));
        }
        let pts = cloud.points();
        let diag = cloud.bbox_diagonal();
        let part_tree = KdTree::build_subset(pts, part);
        let mut contacts = Vec::new();
        for j in complement(part, n) {
            if let Some((i, d)) = part_tree.nearest(&pts[j]) {
                if d < band * diag {
                    let offset = pts[j] - pts[i];
                    contacts.push(Contact {
                        point: pts[j],
                        distance: d,
                        direction: offset.try_normalize(0.0).unwrap_or_default(),
                    });
                }
            }
        }
        Ok(Self {
            part_tree,
            contacts,
            diag,
        })
    }

    pub(crate) fn energy(&self, m: &Mobility, cloud: &PointCloud, config: &EnergyConfig) -> f64 {
        if self.contacts.is_empty() {
            return NO_CONTACT_PENALTY;
        }
        let line = m.line(cloud);
        if !m.motion_type.has_rotation() {
            let d = line.direction;
            let resultant: Vec3 = self
                .contacts
                .iter()
                .map(|c| c.direction - d * c.direction.dot(&d))
                .sum();
            if resultant.norm() / self.contacts.len() as f64 > config.confinement {
                return NO_CONTACT_PENALTY;
            }
        }
        let clamp = config.clamp * self.diag;
        let amounts = config.schedule.amounts(self.diag);
        let mut best = f64::INFINITY;
        for sense in [1.0, -1.0] {
            let mut total = 0.0;
            for amount in &amounts {
                let inv = motion_isometry(&line, m.motion_type, amount.scaled(sense)).inverse();
                for c in &self.contacts {
                    let q = inv.transform_point(&Point3::from(c.point)).coords;
                    total += self
                        .part_tree
                        .nearest(&q)
                        .map_or(clamp, |(_, d)| (d - c.distance).abs().min(clamp));
                }
            }
            let e = total / (self.contacts.len() * amounts.len()) as f64 / self.diag;
            best = best.min(e);
        }
        best
    }
}

/// How badly moving the part disturbs the static points around it.
///
/// Static points within the contact band of the part are tracked through the
/// snapshot motions (both senses; the better one counts). The energy is the
/// mean clamped change of their distance to the part, over the bbox diagonal.
/// Parts without contact, and pure translations that nothing guides laterally,
/// score [`NO_CONTACT_PENALTY`].
pub fn plausibility_energy(cloud: &PointCloud, m: &Mobility, config: &EnergyConfig) -> Result<f64> {
    let frame = ContactFrame::new(cloud, m.part(), config.contact_band)?;
    Ok(frame.energy(m, cloud, config))
}

/// How combinations are ranked.
#[derive(Debug, Clone)]
pub enum Scoring {
    Energy(EnergyConfig),
    /// Smallest matching score against any ground-truth mobility.
    Oracle {
        gt: Vec<Mobility>,
        amounts: MoveAmounts,
    },
}

/// Scores every (part, attribute) pair.
///
/// Output is sorted by error, then smallest part member, then attribute source.
/// Parts whose generator yields nothing contribute nothing.
pub fn match_proposals<F>(
    cloud: &PointCloud,
    parts: &[PartProposal],
    attributes: F,
    scoring: &Scoring,
) -> Result<Vec<MobilityProposal>>
where
    F: Fn(&[usize]) -> Vec<AttributeProposal> + Sync,
{
    let per_part: Vec<Result<Vec<(MobilityProposal, usize)>>> = parts
        .par_iter()
        .map(|p| {
            let attrs = attributes(&p.part);
            if attrs.is_empty() {
                return Ok(Vec::new());
            }
            let frame = match scoring {
                Scoring::Energy(cfg) => Some(ContactFrame::new(cloud, &p.part, cfg.contact_band)?),
                Scoring::Oracle { .. } => None,
            };
            attrs
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    let mobility = Mobility::new(p.part.clone(), a.motion_type, a.axis, cloud)?;
                    let matching_error = match (scoring, &frame) {
                        (Scoring::Energy(cfg), Some(f)) => f.energy(&mobility, cloud, cfg),
                        (Scoring::Oracle { gt, amounts }, _) => gt
                            .iter()
                            .map(|g| matching_score(cloud, &mobility, g, amounts))
                            .fold(f64::INFINITY, f64::min),
                        _ => unreachable!("energy scoring always builds a contact frame"),
                    };
                    Ok((
                        MobilityProposal {
                            mobility,
                            confidence: p.confidence,
                            matching_error,
                            source: a.source,
                        },
                        k,
                    ))
                })
                .collect()
        })
        .collect();
    let mut all = Vec::new();
    for r in per_part {
        all.extend(r?);
    }
    all.sort_by(|(a, ka), (b, kb)| {
        a.matching_error
            .total_cmp(&b.matching_error)
            .then_with(|| a.mobility.part()[0].cmp(&b.mobility.part()[0]))
            .then_with(|| a.mobility.part().cmp(b.mobility.part()))
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| ka.cmp(kb))
    });
    Ok(all.into_iter().map(|(m, _)| m).collect())
}

/// Training-set style selection: keep proposals whose error is at most
/// `max_error` and that rank within the best `top_fraction` (rounded up).
pub fn filter_by_ground_truth(
    mut proposals: Vec<MobilityProposal>,
    max_error: f64,
    top_fraction: f64,
) -> Vec<MobilityProposal> {
    proposals.sort_by(|a, b| a.matching_error.total_cmp(&b.matching_error));
    let keep = (proposals.len() as f64 * top_fraction - 1e-9)
        .ceil()
        .max(0.0) as usize;
    proposals.truncate(keep);
    proposals.retain(|p| p.matching_error <= max_error);
    proposals
}
