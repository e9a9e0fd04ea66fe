//! Mobility data model and exact rigid-motion kinematics.
//!
//! A motion axis is an oriented line. Translations slide along it, rotations
//! turn about it (right-handed, angle in degrees), and screw motions do both:
//! rotation first, then translation along the same line.

use nalgebra::{Isometry3, Rotation3, Translation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, Vec3};
use crate::error::{Error, Result};

pub(crate) const UNIT_TOLERANCE: f64 = 1e-6;

/// Relative guard on the point-to-axis distance used to normalise rotational motion.
pub const DIST_EPSILON_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MotionType {
    #[serde(rename = "T")]
    Translation,
    #[serde(rename = "R")]
    Rotation,
    #[serde(rename = "RT")]
    RotationTranslation,
}

impl MotionType {
    pub const ALL: [MotionType; 3] = [
        MotionType::Translation,
        MotionType::Rotation,
        MotionType::RotationTranslation,
    ];

    pub fn has_rotation(self) -> bool {
        !matches!(self, MotionType::Translation)
    }

    pub fn has_translation(self) -> bool {
        !matches!(self, MotionType::Rotation)
    }

    pub fn code(self) -> &'static str {
        match self {
            MotionType::Translation => "T",
            MotionType::Rotation => "R",
            MotionType::RotationTranslation => "RT",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "T" => Some(MotionType::Translation),
            "R" => Some(MotionType::Rotation),
            "RT" => Some(MotionType::RotationTranslation),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            MotionType::Translation => 0,
            MotionType::Rotation => 1,
            MotionType::RotationTranslation => 2,
        }
    }
}

/// An infinite line given by a point on it and a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisLine {
    pub point: Vec3,
    pub direction: Vec3,
}

impl AxisLine {
    pub fn new(point: Vec3, direction: Vec3) -> Result<Self> {
        let line = Self { point, direction };
        line.validate()?;
        Ok(line)
    }

    /// Builds a line from any non-zero direction, normalising it.
    pub fn through(point: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidAxis("zero direction".into()));
        }
        Self::new(point, direction / n)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.point.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidAxis("non-finite axis point".into()));
        }
        let n = self.direction.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidAxis(format!(
                "direction must be unit length, has norm {n}"
            )));
        }
        Ok(())
    }

    /// Foot of the perpendicular from `p` onto the line.
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        self.point + self.direction * (p - self.point).dot(&self.direction)
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        (p - self.closest_point(p)).norm()
    }
}

/// Perpendicular distance from `p` to the infinite line.
pub fn axis_point_distance(p: &Vec3, axis: &AxisLine) -> f64 {
    axis.distance(p)
}

/// Index-coded motion axis: anchor point of a cloud, offset to the line, and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionAxis {
    pub anchor_index: usize,
    pub displacement: Vec3,
    pub orientation: Vec3,
}

impl MotionAxis {
    /// Encodes a line against a cloud. The anchor is the point closest to the
    /// line (lowest index on ties); the displacement runs from that point to
    /// its foot on the line.
    pub fn encode(line: &AxisLine, cloud: &PointCloud) -> Self {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in cloud.points().iter().enumerate() {
            let d = line.distance(p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let anchor = cloud.point(best);
        Self {
            anchor_index: best,
            displacement: line.closest_point(&anchor) - anchor,
            orientation: line.direction,
        }
    }

    pub fn line(&self, cloud: &PointCloud) -> AxisLine {
        AxisLine {
            point: cloud.point(self.anchor_index) + self.displacement,
            direction: self.orientation,
        }
    }

    pub fn validate(&self, cloud: &PointCloud) -> Result<()> {
        if self.anchor_index >= cloud.len() {
            return Err(Error::InvalidAxis(format!(
                "anchor index {} out of range for {} points",
                self.anchor_index,
                cloud.len()
            )));
        }
        self.line(cloud).validate()
    }
}

/// Canonical motion magnitudes used for scoring and flow conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveAmounts {
    /// Fraction of the bounding-box diagonal.
    pub translation_delta: f64,
    /// Degrees.
    pub rotation_delta: f64,
    /// Divide pure-translation displacement by the point-axis distance as well.
    #[serde(default)]
    pub normalize_translation: bool,
}

impl Default for MoveAmounts {
    fn default() -> Self {
        Self {
            translation_delta: 0.15,
            rotation_delta: 90.0,
            normalize_translation: false,
        }
    }
}

impl MoveAmounts {
    pub fn validate(&self) -> Result<()> {
        if !(self.translation_delta > 0.0) {
            return Err(Error::Domain("translation_delta must be positive".into()));
        }
        if !(self.rotation_delta > 0.0 && self.rotation_delta <= 180.0) {
            return Err(Error::Domain("rotation_delta must lie in (0, 180]".into()));
        }
        Ok(())
    }

    pub fn amount(&self, diag: f64) -> MotionAmount {
        MotionAmount {
            angle_deg: self.rotation_delta,
            distance: self.translation_delta * diag,
        }
    }
}

/// How far to move: degrees for the rotational part, model units for the translational part.
/// Each motion type reads only the component(s) it has.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionAmount {
    pub angle_deg: f64,
    pub distance: f64,
}

impl MotionAmount {
    pub fn scaled(&self, f: f64) -> Self {
        Self {
            angle_deg: self.angle_deg * f,
            distance: self.distance * f,
        }
    }
}

/// Rigid transform for a motion about `line`.
pub fn motion_isometry(line: &AxisLine, ty: MotionType, amount: MotionAmount) -> Isometry3<f64> {
    let dir = Unit::new_unchecked(line.direction);
    let mut iso = Isometry3::identity();
    if ty.has_rotation() {
        let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_axis_angle(
            &dir,
            amount.angle_deg.to_radians(),
        ));
        // x -> c + R (x - c)
        let c = line.point;
        let t = c - rot * c;
        iso = Isometry3::from_parts(Translation3::from(t), rot);
    }
    if ty.has_translation() {
        iso = Isometry3::from_parts(
            Translation3::from(line.direction * amount.distance),
            UnitQuaternion::identity(),
        ) * iso;
    }
    iso
}

/// Moves a point about `axis` by `amount`.
pub fn transform_about_axis(
    p: &Vec3,
    axis: &AxisLine,
    ty: MotionType,
    amount: MotionAmount,
) -> Result<Vec3> {
    axis.validate()?;
    if ty.has_rotation() {
        let c = axis.point;
        let rot = Rotation3::from_axis_angle(
            &Unit::new_unchecked(axis.direction),
            amount.angle_deg.to_radians(),
        );
        let mut out = c + rot * (p - c);
        if ty.has_translation() {
            out += axis.direction * amount.distance;
        }
        Ok(out)
    } else {
        Ok(p + axis.direction * amount.distance)
    }
}

/// A motion part paired with its motion type and axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Mobility {
    part: Vec<usize>,
    pub motion_type: MotionType,
    pub axis: MotionAxis,
}

impl Mobility {
    /// Validates against `cloud`; `part` is sorted, and duplicates are rejected.
    pub fn new(
        mut part: Vec<usize>,
        motion_type: MotionType,
        axis: MotionAxis,
        cloud: &PointCloud,
    ) -> Result<Self> {
        if part.is_empty() {
            return Err(Error::Domain("mobility part is empty".into()));
        }
        part.sort_unstable();
        if part.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("mobility part has duplicate indices".into()));
        }
        if let Some(&last) = part.last() {
            if last >= cloud.len() {
                return Err(Error::Domain(format!(
                    "part index {last} out of range for {} points",
                    cloud.len()
                )));
            }
        }
        axis.validate(cloud)?;
        Ok(Self {
            part,
            motion_type,
            axis,
        })
    }

    pub fn from_line(
        part: Vec<usize>,
        motion_type: MotionType,
        line: &AxisLine,
        cloud: &PointCloud,
    ) -> Result<Self> {
        line.validate()?;
        Self::new(part, motion_type, MotionAxis::encode(line, cloud), cloud)
    }

    pub fn part(&self) -> &[usize] {
        &self.part
    }

    pub fn contains(&self, i: usize) -> bool {
        self.part.binary_search(&i).is_ok()
    }

    pub fn line(&self, cloud: &PointCloud) -> AxisLine {
        self.axis.line(cloud)
    }

    /// Same part and type, different axis line.
    pub fn with_line(&self, line: &AxisLine, cloud: &PointCloud) -> Self {
        Self {
            part: self.part.clone(),
            motion_type: self.motion_type,
            axis: MotionAxis::encode(line, cloud),
        }
    }

    /// Same part, different type and axis.
    pub fn with_motion(&self, motion_type: MotionType, axis: MotionAxis) -> Self {
        Self {
            part: self.part.clone(),
            motion_type,
            axis,
        }
    }

    /// Same axis and type, different part. `part` must be sorted and unique.
    pub fn with_part(&self, part: Vec<usize>) -> Self {
        debug_assert!(part.windows(2).all(|w| w[0] < w[1]));
        Self {
            part,
            motion_type: self.motion_type,
            axis: self.axis,
        }
    }
}

fn dist_epsilon(diag: f64) -> f64 {
    (DIST_EPSILON_FRACTION * diag).max(f64::MIN_POSITIVE)
}

/// Normalised per-point displacement used by the matching score.
///
/// Zero outside the part. Inside, `T(p) - p` under the canonical amounts,
/// divided by the distance to the axis when the motion rotates.
pub fn move_vector(
    p_index: usize,
    cloud: &PointCloud,
    m: &Mobility,
    amounts: &MoveAmounts,
) -> Vec3 {
    if !m.contains(p_index) {
        return Vec3::zeros();
    }
    let diag = cloud.bbox_diagonal();
    let line = m.line(cloud);
    let iso = motion_isometry(&line, m.motion_type, amounts.amount(diag));
    normalized_displacement(
        &cloud.point(p_index),
        &iso,
        &line,
        m.motion_type,
        amounts,
        diag,
    )
}

fn normalized_displacement(
    p: &Vec3,
    iso: &Isometry3<f64>,
    line: &AxisLine,
    ty: MotionType,
    amounts: &MoveAmounts,
    diag: f64,
) -> Vec3 {
    let d = iso.transform_point(&(*p).into()).coords - p;
    if ty.has_rotation() || amounts.normalize_translation {
        d / line.distance(p).max(dist_epsilon(diag))
    } else {
        d
    }
}

/// `move_vector` evaluated for every point of the cloud.
pub fn move_field(cloud: &PointCloud, m: &Mobility, amounts: &MoveAmounts) -> Vec<Vec3> {
    let diag = cloud.bbox_diagonal();
    let line = m.line(cloud);
    let iso = motion_isometry(&line, m.motion_type, amounts.amount(diag));
    let mut out = vec![Vec3::zeros(); cloud.len()];
    for &i in m.part() {
        out[i] =
            normalized_displacement(&cloud.point(i), &iso, &line, m.motion_type, amounts, diag);
    }
    out
}

/// Per-point motion flow of a set of mobilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFlow {
    pub vectors: Vec<Vec3>,
}

impl MotionFlow {
    pub fn zeros(n: usize) -> Self {
        Self {
            vectors: vec![Vec3::zeros(); n],
        }
    }

    /// Mean per-point L2 distance between two flows of equal length.
    pub fn mean_distance(&self, other: &MotionFlow) -> f64 {
        assert_eq!(self.vectors.len(), other.vectors.len());
        let n = self.vectors.len().max(1) as f64;
        self.vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / n
    }
}

/// Unnormalised displacement `T(p) - p` for every part point; zero elsewhere.
/// Where parts overlap, the later mobility wins.
pub fn mobility_to_flow(
    cloud: &PointCloud,
    mobilities: &[Mobility],
    amounts: &MoveAmounts,
) -> MotionFlow {
    let diag = cloud.bbox_diagonal();
    let amount = amounts.amount(diag);
    let mut flow = MotionFlow::zeros(cloud.len());
    for m in mobilities {
        let iso = motion_isometry(&m.line(cloud), m.motion_type, amount);
        for &i in m.part() {
            let p = cloud.point(i);
            flow.vectors[i] = iso.transform_point(&p.into()).coords - p;
        }
    }
    flow
}
