//! Synthetic benchmark: annotated shapes, augmentation, metrics and the file codec.

mod augment;
mod codec;
mod generate;
mod metrics;

pub use augment::{augment_motion, jitter, AugmentLimits, JitterParams};
pub use codec::{
    parse_annotation, read_annotation, read_dataset_index, write_annotation, write_dataset_index,
    write_document, INDEX_FILE,
};
pub use generate::{generate, generate_with, Archetype, GeneratorConfig, MIN_POINTS};
pub use metrics::{evaluate, hungarian_max, iou, proposal_recall, EvalReport};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::kinematics::{AxisLine, Mobility, MotionType, UNIT_TOLERANCE};

/// One annotated motion: type plus an explicit axis line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatedMotion {
    pub motion_type: MotionType,
    pub line: AxisLine,
}

/// A labelled part. Static parts carry no motions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPart {
    pub indices: Vec<usize>,
    pub motions: Vec<AnnotatedMotion>,
}

/// Ground-truth (or predicted) mobilities for one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub shape_id: String,
    pub cloud: PointCloud,
    pub parts: Vec<AnnotatedPart>,
}

impl Annotation {
    pub fn validate(&self) -> Result<()> {
        let n = self.cloud.len();
        for (pi, part) in self.parts.iter().enumerate() {
            if part.indices.is_empty() {
                return Err(Error::Validation {
                    field: format!("parts[{pi}].indices"),
                    message: "part is empty".into(),
                });
            }
            for (k, &i) in part.indices.iter().enumerate() {
                if i >= n {
                    return Err(Error::Validation {
                        field: format!("parts[{pi}].indices[{k}]"),
                        message: format!("index {i} out of range for {n} points"),
                    });
                }
            }
            if part.indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation {
                    field: format!("parts[{pi}].indices"),
                    message: "indices must be strictly increasing".into(),
                });
            }
            for (mi, m) in part.motions.iter().enumerate() {
                let norm = m.line.direction.norm();
                if (norm - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(Error::Validation {
                        field: format!("parts[{pi}].motions[{mi}].direction"),
                        message: format!("direction must be unit length, has norm {norm}"),
                    });
                }
                if !m.line.point.iter().all(|c| c.is_finite()) {
                    return Err(Error::Validation {
                        field: format!("parts[{pi}].motions[{mi}].anchor"),
                        message: "anchor is not finite".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Every (part, motion) pair as an index-coded mobility, in document order.
    pub fn mobilities(&self) -> Result<Vec<Mobility>> {
        let mut out = Vec::new();
        for part in &self.parts {
            for m in &part.motions {
                out.push(Mobility::from_line(
                    part.indices.clone(),
                    m.motion_type,
                    &m.line,
                    &self.cloud,
                )?);
            }
        }
        Ok(out)
    }

    /// Parts that carry at least one motion.
    pub fn moving_parts(&self) -> impl Iterator<Item = &AnnotatedPart> {
        self.parts.iter().filter(|p| !p.motions.is_empty())
    }
}
