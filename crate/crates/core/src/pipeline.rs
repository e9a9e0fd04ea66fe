//! End-to-end extraction: propose, match, refine, extract.

use serde::{Deserialize, Serialize};

use crate::attrprop::{propose_attributes, AttributeConfig, OrientationCodebook};
use crate::bench::{evaluate, iou, AnnotatedMotion, AnnotatedPart, Annotation, EvalReport};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::extract::{extract_mobilities, ExtractionConfig};
use crate::kinematics::MoveAmounts;
use crate::matching::{match_proposals, EnergyConfig, MobilityProposal, Scoring};
use crate::partprop::{propose_parts, FeatureWeights, PartProposal, ProposerConfig};
use crate::refine::{refine_mobility, RefineConfig, SnapshotSchedule};

/// Every tunable of the pipeline as one flat record, so a config file is a
/// plain list of keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tau_sim: f64,
    pub tau_conf: f64,
    /// Margin of the similarity loss.
    pub k_margin: f64,
    pub scales: Vec<f64>,
    pub neighbours: usize,
    pub min_cluster: usize,
    pub translation_delta: f64,
    pub rotation_delta: f64,
    pub normalize_translation: bool,
    pub snapshot_translation: Vec<f64>,
    pub snapshot_rotation_deg: Vec<f64>,
    pub contact_band: f64,
    pub energy_clamp: f64,
    pub confinement: f64,
    pub coaxial_angle_deg: f64,
    /// Proposals refined per part, best first.
    pub top_r: usize,
    pub max_rounds: usize,
    pub offset_start: f64,
    pub offset_floor: f64,
    pub tilt_start_deg: f64,
    pub tilt_floor_deg: f64,
    pub relabel: bool,
    /// Pool entries above these energies never reach extraction.
    pub max_rotation_energy: f64,
    pub max_translation_energy: f64,
    pub part_overlap_iou: f64,
    pub attribute_collection_iou: f64,
    pub rotation_angle_min: f64,
    pub extra_rotation_ratio: f64,
    pub coaxial_translation_only: bool,
    pub merge_coaxial: bool,
    /// Proposals overlapping the static body by more than this are not scored.
    pub static_overlap_iou: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let proposer = ProposerConfig::default();
        let amounts = MoveAmounts::default();
        let schedule = SnapshotSchedule::default();
        let energy = EnergyConfig::default();
        let refine = RefineConfig::default();
        let extraction = ExtractionConfig::default();
        Self {
            tau_sim: proposer.tau_sim,
            tau_conf: proposer.tau_conf,
            k_margin: 100.0,
            scales: proposer.scales,
            neighbours: proposer.neighbours,
            min_cluster: proposer.min_cluster,
            translation_delta: amounts.translation_delta,
            rotation_delta: amounts.rotation_delta,
            normalize_translation: amounts.normalize_translation,
            snapshot_translation: schedule.translation,
            snapshot_rotation_deg: schedule.rotation_deg,
            contact_band: energy.contact_band,
            energy_clamp: energy.clamp,
            confinement: energy.confinement,
            coaxial_angle_deg: extraction.coaxial_angle_deg,
            top_r: 3,
            max_rounds: refine.max_rounds,
            // proposals arrive close to their optimum; refinement only polishes
            offset_start: 0.01,
            offset_floor: refine.offset_floor,
            tilt_start_deg: 2.0,
            tilt_floor_deg: refine.tilt_floor_deg,
            relabel: false,
            max_rotation_energy: 0.006,
            max_translation_energy: 0.015,
            part_overlap_iou: extraction.part_overlap_iou,
            attribute_collection_iou: extraction.attribute_collection_iou,
            rotation_angle_min: extraction.rotation_angle_min,
            extra_rotation_ratio: 3.0,
            coaxial_translation_only: true,
            merge_coaxial: extraction.merge_coaxial,
            static_overlap_iou: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn proposer(&self) -> ProposerConfig {
        ProposerConfig {
            scales: self.scales.clone(),
            neighbours: self.neighbours,
            tau_sim: self.tau_sim,
            tau_conf: self.tau_conf,
            min_cluster: self.min_cluster,
            features: FeatureWeights::default(),
        }
    }

    pub fn amounts(&self) -> MoveAmounts {
        MoveAmounts {
            translation_delta: self.translation_delta,
            rotation_delta: self.rotation_delta,
            normalize_translation: self.normalize_translation,
        }
    }

    pub fn energy(&self) -> EnergyConfig {
        EnergyConfig {
            contact_band: self.contact_band,
            clamp: self.energy_clamp,
            confinement: self.confinement,
            schedule: SnapshotSchedule {
                translation: self.snapshot_translation.clone(),
                rotation_deg: self.snapshot_rotation_deg.clone(),
            },
        }
    }

    pub fn attributes(&self) -> AttributeConfig {
        AttributeConfig {
            contact_band: self.contact_band,
            coaxial_angle_deg: self.coaxial_angle_deg,
        }
    }

    pub fn refine(&self) -> RefineConfig {
        RefineConfig {
            energy: self.energy(),
            max_rounds: self.max_rounds,
            offset_start: self.offset_start,
            offset_floor: self.offset_floor,
            tilt_start_deg: self.tilt_start_deg,
            tilt_floor_deg: self.tilt_floor_deg,
            relabel: self.relabel,
        }
    }

    pub fn extraction(&self) -> ExtractionConfig {
        ExtractionConfig {
            part_overlap_iou: self.part_overlap_iou,
            attribute_collection_iou: self.attribute_collection_iou,
            rotation_angle_min: self.rotation_angle_min,
            merge_coaxial: self.merge_coaxial,
            coaxial_angle_deg: self.coaxial_angle_deg,
            extra_rotation_ratio: Some(self.extra_rotation_ratio),
            coaxial_translation_only: self.coaxial_translation_only,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.proposer().validate()?;
        self.amounts().validate()?;
        self.energy().schedule.validate()?;
        self.extraction().validate()?;
        let positive = [
            ("k_margin", self.k_margin),
            ("contact_band", self.contact_band),
            ("energy_clamp", self.energy_clamp),
            ("confinement", self.confinement),
            ("coaxial_angle_deg", self.coaxial_angle_deg),
            ("offset_start", self.offset_start),
            ("offset_floor", self.offset_floor),
            ("tilt_start_deg", self.tilt_start_deg),
            ("tilt_floor_deg", self.tilt_floor_deg),
            ("max_rotation_energy", self.max_rotation_energy),
            ("max_translation_energy", self.max_translation_energy),
            ("static_overlap_iou", self.static_overlap_iou),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive")));
            }
        }
        if self.top_r == 0 {
            return Err(Error::Domain("top_r must be positive".into()));
        }
        Ok(())
    }
}

/// What one pipeline run produced.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Extracted mobilities in extraction order.
    pub mobilities: Vec<MobilityProposal>,
    /// The same mobilities as an annotation; the last part is the static rest.
    pub annotation: Annotation,
    /// Part proposals as produced, before the static body is removed.
    pub proposals: Vec<PartProposal>,
}

/// The proposal taken to be the static body: the largest plain cluster that
/// leaves something to move.
fn static_body(proposals: &[PartProposal], n: usize) -> Option<&PartProposal> {
    proposals
        .iter()
        .filter(|p| !p.is_union && p.part.len() < n)
        .max_by(|a, b| {
            a.part
                .len()
                .cmp(&b.part.len())
                .then_with(|| b.part.cmp(&a.part))
        })
}

/// Candidate moving parts: everything that is neither the whole cloud nor
/// mostly the static body.
pub fn moving_candidates(
    proposals: &[PartProposal],
    n: usize,
    static_overlap_iou: f64,
) -> Vec<PartProposal> {
    let Some(body) = static_body(proposals, n) else {
        return Vec::new();
    };
    proposals
        .iter()
        .filter(|p| p.part.len() < n && iou(&p.part, &body.part) <= static_overlap_iou)
        .cloned()
        .collect()
}

fn admissible(p: &MobilityProposal, config: &PipelineConfig) -> bool {
    let ty = p.mobility.motion_type;
    let limit = match (ty.has_rotation(), ty.has_translation()) {
        (true, false) => config.max_rotation_energy,
        (false, true) => config.max_translation_energy,
        _ => config
            .max_rotation_energy
            .min(config.max_translation_energy),
    };
    p.matching_error <= limit
}

/// Runs every stage on one cloud.
pub fn run_pipeline(
    cloud: &PointCloud,
    shape_id: &str,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    let n = cloud.len();
    let proposals = propose_parts(cloud, &config.proposer())?;
    let candidates = moving_candidates(&proposals, n, config.static_overlap_iou);

    let attr_config = config.attributes();
    let book = OrientationCodebook::default();
    let scored = match_proposals(
        cloud,
        &candidates,
        |part| propose_attributes(cloud, part, &attr_config, &book).unwrap_or_default(),
        &Scoring::Energy(config.energy()),
    )?;

    // refine the best few per part; the rest enter the pool as scored
    let refine_config = config.refine();
    let mut seen: Vec<(&[usize], usize)> = Vec::new();
    let mut pool = Vec::with_capacity(scored.len());
    for p in &scored {
        let rank = match seen.iter_mut().find(|(part, _)| *part == p.mobility.part()) {
            Some((_, count)) => {
                *count += 1;
                *count
            }
            None => {
                seen.push((p.mobility.part(), 1));
                1
            }
        };
        if rank > config.top_r {
            pool.push(p.clone());
            continue;
        }
        let refined = match refine_mobility(cloud, p, &refine_config) {
            Ok(r) => r,
            Err(Error::RefinementFailed { last_valid, .. }) => *last_valid,
            Err(e) => return Err(e),
        };
        pool.push(MobilityProposal {
            mobility: refined.mobility,
            matching_error: refined.energy_after.min(p.matching_error),
            ..p.clone()
        });
    }
    pool.retain(|p| admissible(p, config));

    let mobilities = extract_mobilities(&pool, &config.extraction());
    let annotation = to_annotation(cloud, shape_id, &mobilities);
    Ok(PipelineOutput {
        mobilities,
        annotation,
        proposals,
    })
}

/// Groups mobilities by identical point set and appends the static remainder.
pub fn to_annotation(
    cloud: &PointCloud,
    shape_id: &str,
    mobilities: &[MobilityProposal],
) -> Annotation {
    let mut parts: Vec<AnnotatedPart> = Vec::new();
    for m in mobilities {
        let motion = AnnotatedMotion {
            motion_type: m.mobility.motion_type,
            line: m.mobility.line(cloud),
        };
        match parts.iter_mut().find(|p| p.indices == m.mobility.part()) {
            Some(p) => p.motions.push(motion),
            None => parts.push(AnnotatedPart {
                indices: m.mobility.part().to_vec(),
                motions: vec![motion],
            }),
        }
    }
    let mut moving = vec![false; cloud.len()];
    for p in &parts {
        for &i in &p.indices {
            moving[i] = true;
        }
    }
    let rest: Vec<usize> = (0..cloud.len()).filter(|&i| !moving[i]).collect();
    if !rest.is_empty() {
        parts.push(AnnotatedPart {
            indices: rest,
            motions: Vec::new(),
        });
    }
    Annotation {
        shape_id: shape_id.to_string(),
        cloud: cloud.clone(),
        parts,
    }
}

/// Scores a pipeline output against ground truth.
pub fn evaluate_output(
    output: &PipelineOutput,
    gt: &Annotation,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let predicted: Vec<_> = output
        .mobilities
        .iter()
        .map(|m| m.mobility.clone())
        .collect();
    evaluate(&predicted, gt, &config.amounts())
}
