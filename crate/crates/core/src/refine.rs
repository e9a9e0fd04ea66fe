//! Joint refinement of a mobility proposal's part and axis.
//!
//! The residual targets and loss a learned refiner would train on, and a
//! deterministic refiner: pattern search over axis offset and tilt, alternating
//! with single-point label toggles near the joint, both by strict descent of
//! the plausibility energy.

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::cloud::{any_perpendicular, centroid, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::kinematics::{motion_isometry, AxisLine, Mobility, MotionAmount, MotionAxis};
use crate::matching::{ContactFrame, EnergyConfig, MobilityProposal};
use crate::partprop::complement;
use crate::spatial::KdTree;

/// Motion amounts of the three snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSchedule {
    /// Fractions of the bbox diagonal.
    pub translation: Vec<f64>,
    /// Degrees.
    pub rotation_deg: Vec<f64>,
}

impl Default for SnapshotSchedule {
    fn default() -> Self {
        Self {
            translation: vec![0.05, 0.10, 0.15],
            rotation_deg: vec![30.0, 60.0, 90.0],
        }
    }
}

impl SnapshotSchedule {
    pub fn validate(&self) -> Result<()> {
        let increasing =
            |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite());
        if self.translation.len() != self.rotation_deg.len() || self.translation.is_empty() {
            return Err(Error::Domain(
                "snapshot schedule needs matching, non-empty lists".into(),
            ));
        }
        if !increasing(&self.translation) || !increasing(&self.rotation_deg) {
            return Err(Error::Domain(
                "snapshot amounts must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn amounts(&self, diag: f64) -> Vec<MotionAmount> {
        self.translation
            .iter()
            .zip(&self.rotation_deg)
            .map(|(t, r)| MotionAmount {
                angle_deg: *r,
                distance: t * diag,
            })
            .collect()
    }
}

/// A moved copy of the cloud and the per-point displacement that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub cloud: PointCloud,
    pub moving: Vec<Vec3>,
}

/// The cloud with the part moved by each scheduled amount; static points are copied untouched.
pub fn dynamic_snapshots(
    cloud: &PointCloud,
    m: &Mobility,
    schedule: &SnapshotSchedule,
) -> Result<Vec<Snapshot>> {
    schedule.validate()?;
    let line = m.line(cloud);
    schedule
        .amounts(cloud.bbox_diagonal())
        .into_iter()
        .map(|amount| snapshot(cloud, m, &line, amount))
        .collect()
}

pub(crate) fn snapshot(
    cloud: &PointCloud,
    m: &Mobility,
    line: &AxisLine,
    amount: MotionAmount,
) -> Result<Snapshot> {
    let iso = motion_isometry(line, m.motion_type, amount);
    let mut points = cloud.points().to_vec();
    let mut normals = cloud.normals().map(<[Vec3]>::to_vec);
    let mut moving = vec![Vec3::zeros(); points.len()];
    for &i in m.part() {
        let p = points[i];
        points[i] = iso.transform_point(&p.into()).coords;
        moving[i] = points[i] - p;
        if let Some(ns) = normals.as_mut() {
            ns[i] = iso.rotation * ns[i];
        }
    }
    Ok(Snapshot {
        cloud: PointCloud::new(points, normals)?,
        moving,
    })
}

/// Corrections to an index-coded axis: added to the displacement and to the
/// orientation (then renormalised).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualPair {
    pub displacement_residual: Vec3,
    pub orientation_residual: Vec3,
}

pub fn apply_residuals(axis: &MotionAxis, r: &ResidualPair) -> Result<MotionAxis> {
    let o = axis.orientation + r.orientation_residual;
    let norm = o.norm();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::InvalidAxis("corrected orientation vanishes".into()));
    }
    Ok(MotionAxis {
        anchor_index: axis.anchor_index,
        displacement: axis.displacement + r.displacement_residual,
        orientation: o / norm,
    })
}

/// Residuals that turn `proposal` into the line of `gt`, measured from the
/// proposal's anchor. The ground-truth direction is taken in whichever sense is
/// closer to the proposal's.
pub fn residual_targets(
    proposal: &MotionAxis,
    gt: &MotionAxis,
    cloud: &PointCloud,
) -> Result<ResidualPair> {
    proposal.validate(cloud)?;
    gt.validate(cloud)?;
    let anchor = cloud.point(proposal.anchor_index);
    let gt_line = gt.line(cloud);
    let target_offset = gt_line.closest_point(&anchor) - anchor;
    let mut gt_dir = gt_line.direction;
    if gt_dir.dot(&proposal.orientation) < 0.0 {
        gt_dir = -gt_dir;
    }
    Ok(ResidualPair {
        displacement_residual: target_offset - proposal.displacement,
        orientation_residual: gt_dir - proposal.orientation,
    })
}

/// Labelling log-loss plus squared residual errors.
///
/// `pred_labels[i]` is the predicted probability that point `i` belongs to the part.
pub fn mon_loss(
    pred_labels: &[f64],
    pred_residuals: &ResidualPair,
    gt_labels: &[bool],
    gt_residuals: &ResidualPair,
) -> Result<f64> {
    if pred_labels.len() != gt_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: gt_labels.len(),
            found: pred_labels.len(),
        });
    }
    let mut loss = 0.0;
    for (&p, &y) in pred_labels.iter().zip(gt_labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::MalformedDistribution(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        let q = if y { p } else { 1.0 - p };
        loss -= q.max(crate::attrprop::PROB_EPSILON).ln();
    }
    loss +=
        (pred_residuals.displacement_residual - gt_residuals.displacement_residual).norm_squared();
    loss +=
        (pred_residuals.orientation_residual - gt_residuals.orientation_residual).norm_squared();
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub energy: EnergyConfig,
    pub max_rounds: usize,
    /// Axis offset step range, fractions of the bbox diagonal.
    pub offset_start: f64,
    pub offset_floor: f64,
    /// Axis tilt step range, degrees.
    pub tilt_start_deg: f64,
    pub tilt_floor_deg: f64,
    /// Whether points near the joint may change sides.
    pub relabel: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            energy: EnergyConfig::default(),
            max_rounds: 10,
            offset_start: 0.05,
            offset_floor: 1e-3,
            tilt_start_deg: 10.0,
            tilt_floor_deg: 0.1,
            relabel: true,
        }
    }
}

/// Outcome of refining one proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedMobility {
    pub mobility: Mobility,
    /// Residuals from the input axis to the output axis (same anchor).
    pub residuals_applied: ResidualPair,
    pub energy_before: f64,
    pub energy_after: f64,
}

struct State<'a> {
    cloud: &'a PointCloud,
    config: &'a RefineConfig,
    part: Vec<usize>,
    frame: ContactFrame,
    mobility: Mobility,
    energy: f64,
}

impl State<'_> {
    fn try_axis(&mut self, axis: MotionAxis) -> bool {
        let candidate = Mobility::new(
            self.part.clone(),
            self.mobility.motion_type,
            axis,
            self.cloud,
        );
        let Ok(candidate) = candidate else {
            return false;
        };
        let e = self
            .frame
            .energy(&candidate, self.cloud, &self.config.energy);
        if e < self.energy {
            self.energy = e;
            self.mobility = candidate;
            true
        } else {
            false
        }
    }

    /// Pattern search over the axis; returns whether anything improved.
    fn axis_step(&mut self) -> bool {
        let diag = self.cloud.bbox_diagonal();
        let pts = self.cloud.points();
        let pivot_target = centroid(self.part.iter().map(|&i| pts[i])).unwrap_or_default();
        let translating_only = !self.mobility.motion_type.has_rotation();
        let mut offset = self.config.offset_start * diag;
        let mut tilt = self.config.tilt_start_deg;
        let offset_floor = self.config.offset_floor * diag;
        let mut improved = false;
        while offset >= offset_floor || tilt >= self.config.tilt_floor_deg {
            let mut moved = false;
            let axis = self.mobility.axis;
            let line = axis.line(self.cloud);
            let u = any_perpendicular(&line.direction);
            let v = line.direction.cross(&u);
            if !translating_only && offset >= offset_floor {
                for dir in [u, -u, v, -v] {
                    let cand = MotionAxis {
                        displacement: axis.displacement + dir * offset,
                        ..axis
                    };
                    if self.try_axis(cand) {
                        moved = true;
                        break;
                    }
                }
            }
            if !moved && tilt >= self.config.tilt_floor_deg {
                let pivot = line.closest_point(&pivot_target);
                for (about, sign) in [(u, 1.0), (u, -1.0), (v, 1.0), (v, -1.0)] {
                    let rot = Rotation3::from_axis_angle(
                        &Unit::new_normalize(about),
                        sign * tilt.to_radians(),
                    );
                    let dir = (rot * line.direction).normalize();
                    let tilted = AxisLine {
                        point: pivot,
                        direction: dir,
                    };
                    // keep the anchor; re-express the tilted line as its offset
                    let anchor = pts[axis.anchor_index];
                    let cand = MotionAxis {
                        anchor_index: axis.anchor_index,
                        displacement: tilted.closest_point(&anchor) - anchor,
                        orientation: dir,
                    };
                    if self.try_axis(cand) {
                        moved = true;
                        break;
                    }
                }
            }
            if moved {
                improved = true;
            } else {
                offset *= 0.5;
                tilt *= 0.5;
            }
        }
        improved
    }

    /// One sweep of single-point toggles near the joint, in index order.
    fn label_step(&mut self) -> Result<bool> {
        let n = self.cloud.len();
        let pts = self.cloud.points();
        let band = self.config.energy.contact_band * self.cloud.bbox_diagonal();
        let part_tree = KdTree::build_subset(pts, &self.part);
        let rest = complement(&self.part, n);
        let rest_tree = KdTree::build_subset(pts, &rest);
        let mut near: Vec<usize> = Vec::new();
        for i in 0..n {
            let other = if self.mobility.contains(i) {
                &rest_tree
            } else {
                &part_tree
            };
            if other.nearest(&pts[i]).is_some_and(|(_, d)| d < band) {
                near.push(i);
            }
        }
        let mut improved = false;
        for i in near {
            let mut part = self.part.clone();
            match part.binary_search(&i) {
                Ok(k) => {
                    part.remove(k);
                }
                Err(k) => part.insert(k, i),
            }
            if part.is_empty() || part.len() == n {
                continue;
            }
            let frame = ContactFrame::new(self.cloud, &part, self.config.energy.contact_band)?;
            let candidate = self.mobility.with_part(part.clone());
            let e = frame.energy(&candidate, self.cloud, &self.config.energy);
            if e < self.energy {
                self.energy = e;
                self.part = part;
                self.frame = frame;
                self.mobility = candidate;
                improved = true;
            }
        }
        Ok(improved)
    }
}

/// Refines one proposal by strict descent of the plausibility energy.
///
/// Rounds alternate an axis step and (optionally) a label step until neither
/// improves or `max_rounds` is reached. The anchor index never changes, so the
/// applied residuals are plain differences of displacement and orientation.
pub fn refine_mobility(
    cloud: &PointCloud,
    proposal: &MobilityProposal,
    config: &RefineConfig,
) -> Result<RefinedMobility> {
    config.energy.schedule.validate()?;
    let start = &proposal.mobility;
    let unchanged = |energy: f64| RefinedMobility {
        mobility: start.clone(),
        residuals_applied: ResidualPair::default(),
        energy_before: energy,
        energy_after: energy,
    };
    let frame = match ContactFrame::new(cloud, start.part(), config.energy.contact_band) {
        Ok(f) => f,
        Err(e) => {
            return Err(Error::RefinementFailed {
                reason: e.to_string(),
                last_valid: Box::new(unchanged(f64::INFINITY)),
            })
        }
    };
    let energy_before = frame.energy(start, cloud, &config.energy);
    let mut state = State {
        cloud,
        config,
        part: start.part().to_vec(),
        frame,
        mobility: start.clone(),
        energy: energy_before,
    };
    for _ in 0..config.max_rounds {
        let mut improved = state.axis_step();
        if config.relabel {
            improved |= state.label_step()?;
        }
        if !improved {
            break;
        }
    }
    let axis = state.mobility.axis;
    Ok(RefinedMobility {
        residuals_applied: ResidualPair {
            displacement_residual: axis.displacement - start.axis.displacement,
            orientation_residual: axis.orientation - start.axis.orientation,
        },
        mobility: state.mobility,
        energy_before,
        energy_after: state.energy,
    })
}
