//! Subcommand bodies. Each returns the bytes it would write so the binary and
//! the tests share one code path.

use std::path::{Path, PathBuf};

use mobility_core::bench::{
    augment_motion, evaluate, generate, iou, read_annotation, read_dataset_index, write_annotation,
    write_dataset_index, write_document, Annotation, Archetype, AugmentLimits, EvalReport, INDEX_FILE,
};
use mobility_core::pipeline::{evaluate_output, run_pipeline, PipelineConfig, PipelineOutput};
use mobility_core::{PointCloud, Vec3};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::with_param;
use crate::{CliError, Result};

/// Proposals must reach this IoU with a ground-truth part to count as a hit.
pub const RECALL_IOU: f64 = 0.5;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Whitespace separated `x y z` or `x y z nx ny nz` rows; `#` starts a comment.
pub fn parse_xyz(text: &str) -> std::result::Result<PointCloud, String> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format!("line {}: {e}", ln + 1))?;
        match vals.len() {
            3 => points.push(Vec3::new(vals[0], vals[1], vals[2])),
            6 => {
                points.push(Vec3::new(vals[0], vals[1], vals[2]));
                normals.push(Vec3::new(vals[3], vals[4], vals[5]));
            }
            k => return Err(format!("line {}: expected 3 or 6 values, found {k}", ln + 1)),
        }
    }
    let normals = match normals.len() {
        0 => None,
        k if k == points.len() => Some(normals),
        _ => return Err("normals given for some points only".into()),
    };
    PointCloud::new(points, normals).map_err(|e| e.to_string())
}

/// Reads an annotation document, or a raw `.xyz` cloud as an unannotated shape
/// named after the file.
pub fn load_input(path: &Path) -> Result<Annotation> {
    let bytes = read_bytes(path)?;
    let invalid = |message: String| CliError::Input {
        path: path.to_path_buf(),
        message,
    };
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xyz")) {
        let text = String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))?;
        let cloud = parse_xyz(&text).map_err(invalid)?;
        let shape_id = path.file_stem().map_or("shape".into(), |s| s.to_string_lossy().into_owned());
        return Ok(Annotation {
            shape_id,
            cloud,
            parts: Vec::new(),
        });
    }
    read_annotation(&bytes).map_err(|e| invalid(e.to_string()))
}

pub fn gen_shape(archetype: Archetype, seed: u64, points: usize) -> Result<String> {
    Ok(write_annotation(&generate(archetype, seed, points)?)?)
}

/// Writes one file per (archetype, seed) plus the index; returns the ids.
pub fn gen_dataset(dir: &Path, archetypes: &[Archetype], seeds: &[u64], points: usize) -> Result<Vec<String>> {
    create_dir(dir)?;
    let mut ids = Vec::new();
    for &a in archetypes {
        for &seed in seeds {
            let ann = generate(a, seed, points)?;
            write_file(&dir.join(format!("{}.json", ann.shape_id)), &write_annotation(&ann)?)?;
            ids.push(ann.shape_id);
        }
    }
    write_dataset_index(dir, &ids)?;
    Ok(ids)
}

pub fn augment(input: &Path, poses: usize, out_dir: &Path) -> Result<Vec<String>> {
    let ann = load_input(input)?;
    let posed = augment_motion(&ann, poses, &AugmentLimits::default())?;
    create_dir(out_dir)?;
    let mut ids = Vec::with_capacity(posed.len());
    for a in posed {
        write_file(&out_dir.join(format!("{}.json", a.shape_id)), &write_annotation(&a)?)?;
        ids.push(a.shape_id);
    }
    write_dataset_index(out_dir, &ids)?;
    Ok(ids)
}

/// Ground-truth parts hit by a proposal, and the number of ground-truth parts.
fn recall_counts(output: &PipelineOutput, gt: &Annotation) -> (usize, usize) {
    let parts: Vec<&[usize]> = gt.moving_parts().map(|p| p.indices.as_slice()).collect();
    let hits = parts
        .iter()
        .filter(|g| output.proposals.iter().any(|p| iou(&p.part, g) >= RECALL_IOU))
        .count();
    (hits, parts.len())
}

fn has_ground_truth(ann: &Annotation) -> bool {
    ann.moving_parts().next().is_some()
}

/// Runs the pipeline and renders the result document. Inputs with moving parts
/// are treated as ground truth and get a `report` block.
pub fn run(input: &Annotation, config: &PipelineConfig) -> Result<String> {
    let output = run_pipeline(&input.cloud, &input.shape_id, config)?;
    if !has_ground_truth(input) {
        return Ok(write_document(&output.annotation, &[])?);
    }
    let report = evaluate_output(&output, input, config)?;
    let (hits, total) = recall_counts(&output, input);
    let mut block = serde_json::to_value(&report).expect("report serialises");
    block["proposal_recall"] = json!(hits as f64 / total as f64);
    Ok(write_document(&output.annotation, &[("report", &block)])?)
}

/// Scores a predicted annotation against ground truth on the same cloud.
pub fn eval_pair(pred: &Annotation, gt: &Annotation, config: &PipelineConfig) -> Result<EvalReport> {
    if pred.cloud.len() != gt.cloud.len() {
        return Err(mobility_core::Error::DimensionMismatch {
            expected: gt.cloud.len(),
            found: pred.cloud.len(),
        }
        .into());
    }
    Ok(evaluate(&pred.mobilities()?, gt, &config.amounts())?)
}

/// Shapes of a dataset directory in index order, or in file name order when
/// there is no index.
pub fn load_dataset(dir: &Path) -> Result<Vec<Annotation>> {
    let paths: Vec<PathBuf> = if dir.join(INDEX_FILE).exists() {
        read_dataset_index(dir)?
            .into_iter()
            .map(|id| dir.join(format!("{id}.json")))
            .collect()
    } else {
        let entries = std::fs::read_dir(dir).map_err(|e| CliError::Input {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        paths
    };
    if paths.is_empty() {
        return Err(CliError::NoShapes(dir.to_path_buf()));
    }
    paths.iter().map(|p| load_input(p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeScore {
    pub shape_id: String,
    #[serde(flatten)]
    pub report: EvalReport,
    pub proposal_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetReport {
    pub shapes: Vec<ShapeScore>,
    pub mean_iou: f64,
    pub mean_epe: f64,
    /// Over shapes where the metric is defined.
    pub mean_md: Option<f64>,
    pub mean_oe: Option<f64>,
    pub mean_ta: f64,
    /// Ground-truth parts hit by any proposal, pooled over the dataset.
    pub proposal_recall: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs the pipeline on every shape. Results come back in dataset order
/// whatever the worker count.
pub fn eval_dataset(shapes: &[Annotation], config: &PipelineConfig, workers: Option<usize>) -> Result<DatasetReport> {
    if shapes.is_empty() {
        return Err(CliError::NoShapes(PathBuf::new()));
    }
    let scored: Vec<Result<(ShapeScore, usize, usize)>> = with_workers(workers, || {
        shapes
            .par_iter()
            .map(|gt| {
                let output = run_pipeline(&gt.cloud, &gt.shape_id, config)?;
                let report = evaluate_output(&output, gt, config)?;
                let (hits, total) = recall_counts(&output, gt);
                let shape_recall = if total == 0 { 1.0 } else { hits as f64 / total as f64 };
                Ok((
                    ShapeScore {
                        shape_id: gt.shape_id.clone(),
                        report,
                        proposal_recall: shape_recall,
                    },
                    hits,
                    total,
                ))
            })
            .collect()
    })?;
    let mut rows = Vec::with_capacity(scored.len());
    let (mut hits, mut total) = (0, 0);
    for r in scored {
        let (row, h, t) = r?;
        hits += h;
        total += t;
        rows.push(row);
    }
    Ok(DatasetReport {
        mean_iou: mean(rows.iter().map(|r| r.report.iou)).unwrap_or(0.0),
        mean_epe: mean(rows.iter().map(|r| r.report.epe)).unwrap_or(0.0),
        mean_md: mean(rows.iter().filter_map(|r| r.report.md)),
        mean_oe: mean(rows.iter().filter_map(|r| r.report.oe)),
        mean_ta: mean(rows.iter().map(|r| r.report.ta)).unwrap_or(0.0),
        proposal_recall: if total == 0 { 1.0 } else { hits as f64 / total as f64 },
        shapes: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub recall: f64,
    pub mean_iou: f64,
}

/// One dataset evaluation per value of `param`.
pub fn sweep(
    shapes: &[Annotation],
    base: &PipelineConfig,
    param: &str,
    values: &[String],
    workers: Option<usize>,
) -> Result<Vec<SweepRow>> {
    // reject a bad name or value before any pipeline runs
    let configs = values
        .iter()
        .map(|v| with_param(base, param, v))
        .collect::<Result<Vec<_>>>()?;
    values
        .iter()
        .zip(&configs)
        .map(|(v, c)| {
            let report = eval_dataset(shapes, c, workers)?;
            Ok(SweepRow {
                value: v.trim().to_string(),
                recall: report.proposal_recall,
                mean_iou: report.mean_iou,
            })
        })
        .collect()
}

/// Column-aligned text rendering of a sweep.
pub fn sweep_table(param: &str, rows: &[SweepRow]) -> String {
    let header = [param.to_string(), format!("recall@{RECALL_IOU}"), "mean_iou".to_string()];
    let body: Vec<[String; 3]> = rows
        .iter()
        .map(|r| [r.value.clone(), format!("{:.4}", r.recall), format!("{:.4}", r.mean_iou)])
        .collect();
    let mut widths = header.each_ref().map(String::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&body) {
        let line = format!("{:<w0$}  {:>w1$}  {:>w2$}", row[0], row[1], row[2], w0 = widths[0], w1 = widths[1], w2 = widths[2]);
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn sweep_json(param: &str, rows: &[SweepRow]) -> String {
    let doc: Value = json!({ "parameter": param, "recall_iou": RECALL_IOU, "rows": rows });
    serde_json::to_string_pretty(&doc).expect("sweep serialises") + "\n"
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialises") + "\n"
}
