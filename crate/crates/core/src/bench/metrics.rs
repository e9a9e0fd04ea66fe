//! Segmentation and motion-attribute metrics against a ground-truth annotation.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use super::Annotation;
use crate::cloud::{undirected_angle_deg, Vec3};
use crate::error::{Error, Result};
use crate::kinematics::{mobility_to_flow, AxisLine, Mobility, MotionType, MoveAmounts};

/// Summary scores for one shape.
///
/// `md` and `oe` are `None` when no attribute pair could be matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou: f64,
    pub epe: f64,
    pub md: Option<f64>,
    pub oe: Option<f64>,
    pub ta: f64,
}

/// Intersection over union of two sorted index sets; 0 when both are empty.
pub fn iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

const WEIGHT_SCALE: f64 = 1e9;

/// Maximum-weight assignment of rows to columns. Weights must be finite and
/// non-negative; entry `r` of the result is the column given to row `r`, if any.
pub fn hungarian_max(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let to_int = |w: f64| (w * WEIGHT_SCALE).round() as i64;
    if rows <= cols {
        let m = Matrix::from_fn(rows, cols, |(r, c)| to_int(weights[r][c]));
        let (_, assign) = kuhn_munkres(&m);
        assign.into_iter().map(Some).collect()
    } else {
        let m = Matrix::from_fn(cols, rows, |(c, r)| to_int(weights[r][c]));
        let (_, assign) = kuhn_munkres(&m);
        let mut out = vec![None; rows];
        for (c, r) in assign.into_iter().enumerate() {
            out[r] = Some(c);
        }
        out
    }
}

/// Fraction of moving ground-truth parts hit by some proposal with IoU at least `threshold`.
pub fn proposal_recall(proposals: &[Vec<usize>], gt: &Annotation, threshold: f64) -> f64 {
    let parts: Vec<&[usize]> = gt.moving_parts().map(|p| p.indices.as_slice()).collect();
    if parts.is_empty() {
        return 1.0;
    }
    let hit = parts
        .iter()
        .filter(|g| proposals.iter().any(|p| iou(p, g) >= threshold))
        .count();
    hit as f64 / parts.len() as f64
}

/// Midpoint of the part of `line` inside the box, or the foot of the box
/// centre when the line misses it.
fn clipped_midpoint(line: &AxisLine, lo: &Vec3, hi: &Vec3) -> Vec3 {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        let d = line.direction[k];
        let p = line.point[k];
        if d.abs() < 1e-15 {
            if p < lo[k] || p > hi[k] {
                return line.closest_point(&(0.5 * (lo + hi)));
            }
            continue;
        }
        let a = (lo[k] - p) / d;
        let b = (hi[k] - p) / d;
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t0 > t1 {
        return line.closest_point(&(0.5 * (lo + hi)));
    }
    line.point + line.direction * (0.5 * (t0 + t1))
}

/// Within a part pair, a motion of the right type is preferred over a wrongly
/// typed one whose axis is at most this many degrees closer.
const TYPE_AGREEMENT_DEG: f64 = 5.0;

/// Scores predicted mobilities against the ground truth.
///
/// Predicted mobilities sharing an identical part form one predicted part.
/// Parts are paired by maximum-IoU assignment over the moving ground-truth
/// parts; within a pair, motions are paired to minimise orientation error,
/// with a small preference for agreeing motion types.
/// The axis distance is only measured for ground-truth motions with a rotational
/// component, because a translation line has no meaningful position.
pub fn evaluate(pred: &[Mobility], gt: &Annotation, amounts: &MoveAmounts) -> Result<EvalReport> {
    amounts.validate()?;
    let cloud = &gt.cloud;
    let n = cloud.len();
    for m in pred {
        if m.part().last().is_some_and(|&i| i >= n) {
            return Err(Error::Domain(
                "predicted part indexes outside the cloud".into(),
            ));
        }
    }
    let diag = cloud.bbox_diagonal();
    let (lo, hi) = cloud.bounds();

    // group predictions by part
    let mut pred_parts: Vec<(&[usize], Vec<(MotionType, AxisLine)>)> = Vec::new();
    for m in pred {
        let line = m.line(cloud);
        match pred_parts.iter_mut().find(|(p, _)| *p == m.part()) {
            Some((_, ms)) => ms.push((m.motion_type, line)),
            None => pred_parts.push((m.part(), vec![(m.motion_type, line)])),
        }
    }
    let gt_parts: Vec<_> = gt.moving_parts().collect();
    let gt_mobilities = gt.mobilities()?;
    let total_motions: usize = gt_parts.iter().map(|p| p.motions.len()).sum();

    let flow_gt = mobility_to_flow(cloud, &gt_mobilities, amounts);
    let flow_pred = mobility_to_flow(cloud, pred, amounts);
    let epe = if n == 0 {
        0.0
    } else {
        flow_gt
            .vectors
            .iter()
            .zip(&flow_pred.vectors)
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / n as f64
    };

    if gt_parts.is_empty() {
        let empty = pred_parts.is_empty();
        return Ok(EvalReport {
            iou: if empty { 1.0 } else { 0.0 },
            epe,
            md: None,
            oe: None,
            ta: if empty { 1.0 } else { 0.0 },
        });
    }

    let weights: Vec<Vec<f64>> = gt_parts
        .iter()
        .map(|g| pred_parts.iter().map(|(p, _)| iou(&g.indices, p)).collect())
        .collect();
    let assignment = hungarian_max(&weights);

    let mut iou_sum = 0.0;
    let mut correct = 0usize;
    let mut oes = Vec::new();
    let mut mds = Vec::new();
    for (gi, g) in gt_parts.iter().enumerate() {
        let Some(pi) = assignment[gi] else { continue };
        let overlap = weights[gi][pi];
        if overlap <= 0.0 {
            continue;
        }
        iou_sum += overlap;
        let motions = &pred_parts[pi].1;
        let angle = |a: &Vec3, b: &Vec3| undirected_angle_deg(a, b);
        let w: Vec<Vec<f64>> = g
            .motions
            .iter()
            .map(|gm| {
                motions
                    .iter()
                    .map(|(ty, l)| {
                        let bonus = if *ty == gm.motion_type {
                            TYPE_AGREEMENT_DEG
                        } else {
                            0.0
                        };
                        90.0 - angle(&gm.line.direction, &l.direction) + bonus
                    })
                    .collect()
            })
            .collect();
        for (gmi, pmi) in hungarian_max(&w).into_iter().enumerate() {
            let Some(pmi) = pmi else { continue };
            let gm = &g.motions[gmi];
            let (ptype, pline) = &motions[pmi];
            oes.push(angle(&gm.line.direction, &pline.direction));
            if gm.motion_type.has_rotation() {
                let mid = clipped_midpoint(&gm.line, &lo, &hi);
                mds.push(pline.distance(&mid) / diag);
            }
            if *ptype == gm.motion_type {
                correct += 1;
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(EvalReport {
        iou: iou_sum / gt_parts.len() as f64,
        epe,
        md: mean(&mds),
        oe: mean(&oes),
        ta: if total_motions == 0 {
            1.0
        } else {
            correct as f64 / total_motions as f64
        },
    })
}
