//! Motion part proposals.
//!
//! A similarity matrix over per-point features, its row binarisation and the
//! hinge loss that would train such features, plus a deterministic proposer:
//! multi-scale region growing on a k-NN graph whose clusters (and unions of
//! adjacent cluster pairs) become candidate parts.

use serde::{Deserialize, Serialize};

use crate::cloud::{principal_axes, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::spatial::KdTree;

/// Row-major per-point feature vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Weights of the hand-crafted feature blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    /// Position is expressed in percent of the bbox diagonal, times this.
    pub position: f64,
    pub normal: f64,
    pub shape: f64,
    /// Neighbourhood size of the covariance descriptor.
    pub neighbours: usize,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            normal: 40.0,
            shape: 10.0,
            neighbours: 12,
        }
    }
}

/// Nine features per point: scaled position, scaled normal (zeros when the
/// cloud has none) and three local covariance shape ratios.
pub fn hand_crafted_features(cloud: &PointCloud, weights: &FeatureWeights) -> FeatureMap {
    let pts = cloud.points();
    let diag = cloud.bbox_diagonal();
    let unit = if diag > 0.0 { 100.0 / diag } else { 1.0 };
    let tree = KdTree::build(pts);
    let k = weights.neighbours.max(3).min(pts.len());
    let mut data = Vec::with_capacity(pts.len() * 9);
    for (i, p) in pts.iter().enumerate() {
        data.extend((p * unit * weights.position).iter());
        let n = cloud.normals().map_or(Vec3::zeros(), |ns| ns[i]);
        data.extend((n * weights.normal).iter());
        let hood: Vec<Vec3> = tree.knn(p, k).into_iter().map(|(j, _)| pts[j]).collect();
        let shape = match principal_axes(&hood) {
            Some((_, ev, _)) if ev[0] > 0.0 => {
                let sum = ev[0] + ev[1] + ev[2];
                [ev[1] / ev[0], ev[2] / ev[0], ev[2] / sum]
            }
            _ => [0.0; 3],
        };
        data.extend(shape.iter().map(|s| s * weights.shape));
    }
    FeatureMap { dim: 9, data }
}

/// Dense symmetric matrix of pairwise feature distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_features(features: &FeatureMap) -> Self {
        let n = features.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = features.distance(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    /// Validates symmetry (1e-6), a zero diagonal and non-negative entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::Domain(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !(v >= 0.0) || (v - data[j * n + i]).abs() > 1e-6 {
                    return Err(Error::Domain(format!(
                        "entry ({i}, {j}) is negative or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Contrastive hinge loss over all ordered pairs `i != j`: co-members pay their
/// feature distance, others pay `max(0, margin - distance)`.
pub fn similarity_loss(
    features: &FeatureMap,
    co_membership: &[Vec<bool>],
    margin: f64,
) -> Result<f64> {
    let n = features.len();
    if !(margin > 0.0) {
        return Err(Error::Domain("margin must be positive".into()));
    }
    if co_membership.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: co_membership.len(),
        });
    }
    for (i, row) in co_membership.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        if !row[i] {
            return Err(Error::Domain("co-membership must be reflexive".into()));
        }
        if (0..i).any(|j| row[j] != co_membership[j][i]) {
            return Err(Error::Domain("co-membership must be symmetric".into()));
        }
    }
    let mut loss = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = features.distance(i, j);
            loss += if co_membership[i][j] {
                d
            } else {
                (margin - d).max(0.0)
            };
        }
    }
    Ok(loss)
}

/// Points whose distance to `row` is strictly below `tau`.
pub fn binarize_row(sim: &SimilarityMatrix, row: usize, tau: f64) -> Vec<usize> {
    sim.row(row)
        .iter()
        .enumerate()
        .filter(|(_, &d)| d < tau)
        .map(|(j, _)| j)
        .collect()
}

/// IoU of a proposal and a ground-truth part, the regression target for confidence.
pub fn confidence_ground_truth(proposal: &[usize], gt: &[usize]) -> Result<f64> {
    if proposal.is_empty() || gt.is_empty() {
        return Err(Error::Domain(
            "confidence target needs two non-empty sets".into(),
        ));
    }
    let mut a = proposal.to_vec();
    let mut b = gt.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    Ok(crate::bench::iou(&a, &b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerConfig {
    /// Edge length limits as fractions of the bbox diagonal.
    pub scales: Vec<f64>,
    pub neighbours: usize,
    /// Feature distance limit for an edge.
    pub tau_sim: f64,
    /// Proposals at or below this confidence are dropped.
    pub tau_conf: f64,
    pub min_cluster: usize,
    pub features: FeatureWeights,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        Self {
            scales: vec![0.03, 0.04, 0.045],
            neighbours: 12,
            tau_sim: 100.0,
            tau_conf: 0.5,
            min_cluster: 16,
            features: FeatureWeights::default(),
        }
    }
}

impl ProposerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Domain("proposer scales must be positive".into()));
        }
        if !(self.tau_sim > 0.0) || !(0.0..1.0).contains(&self.tau_conf) {
            return Err(Error::Domain(
                "tau_sim must be positive and tau_conf in [0, 1)".into(),
            ));
        }
        if self.neighbours == 0 || self.min_cluster == 0 {
            return Err(Error::Domain(
                "neighbours and min_cluster must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartProposal {
    /// Sorted point indices.
    pub part: Vec<usize>,
    pub confidence: f64,
    /// Finest scale (index into the configured scales) that produced this set.
    pub scale: usize,
    /// Whether the set was formed by joining two adjacent clusters.
    pub is_union: bool,
}

struct Graph {
    /// Symmetrised neighbour lists with Euclidean edge lengths.
    adj: Vec<Vec<(usize, f64)>>,
}

fn knn_graph(cloud: &PointCloud, k: usize, tree: &KdTree) -> Graph {
    let pts = cloud.points();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); pts.len()];
    for (i, p) in pts.iter().enumerate() {
        for (j, d) in tree.knn(p, k + 1) {
            if j != i {
                adj[i].push((j, d));
                adj[j].push((i, d));
            }
        }
    }
    for list in &mut adj {
        list.sort_by(|a, b| a.0.cmp(&b.0));
        list.dedup_by_key(|e| e.0);
    }
    Graph { adj }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components under the edge predicate, each sorted, ordered by smallest member.
fn components(graph: &Graph, features: &FeatureMap, max_len: f64, tau_sim: f64) -> Vec<Vec<usize>> {
    let n = graph.adj.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for &(j, d) in &graph.adj[i] {
            if j > i && d < max_len && features.distance(i, j) < tau_sim {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Compactness of a point set: distance to the nearest outside point over the
/// mean intra-set k-NN distance, squashed by `x / (1 + x)`.
fn compactness(points: &[Vec3], set: &[usize], k: usize) -> f64 {
    if set.len() < 2 {
        return 0.0;
    }
    if set.len() == points.len() {
        return 1.0;
    }
    let inside = KdTree::build_subset(points, set);
    let kk = k.min(set.len() - 1);
    let mut spread = 0.0;
    for &i in set {
        let nn = inside.knn(&points[i], kk + 1);
        spread += nn.iter().skip(1).map(|(_, d)| d).sum::<f64>() / kk as f64;
    }
    spread /= set.len() as f64;
    let outside: Vec<usize> = complement(set, points.len());
    let out_tree = KdTree::build_subset(points, &outside);
    let gap = set
        .iter()
        .filter_map(|&i| out_tree.nearest(&points[i]).map(|(_, d)| d))
        .fold(f64::INFINITY, f64::min);
    if spread <= 0.0 {
        return 1.0;
    }
    let x = gap / spread;
    x / (1.0 + x)
}

pub(crate) fn complement(set: &[usize], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - set.len());
    let mut it = set.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out
}

/// Candidate motion parts, sorted by descending confidence then smallest member.
pub fn propose_parts(cloud: &PointCloud, config: &ProposerConfig) -> Result<Vec<PartProposal>> {
    config.validate()?;
    let n = cloud.len();
    if n < config.min_cluster {
        return Err(Error::CloudTooSmall {
            found: n,
            min: config.min_cluster,
        });
    }
    let pts = cloud.points();
    let diag = cloud.bbox_diagonal();
    let tree = KdTree::build(pts);
    let graph = knn_graph(cloud, config.neighbours, &tree);
    let features = hand_crafted_features(cloud, &config.features);

    let mut raw: Vec<(Vec<usize>, usize, bool)> = Vec::new();
    for (si, &scale) in config.scales.iter().enumerate() {
        let limit = scale * diag;
        let clusters: Vec<Vec<usize>> = components(&graph, &features, limit, config.tau_sim)
            .into_iter()
            .filter(|c| c.len() >= config.min_cluster)
            .collect();
        let trees: Vec<KdTree> = clusters
            .iter()
            .map(|c| KdTree::build_subset(pts, c))
            .collect();
        for c in &clusters {
            raw.push((c.clone(), si, false));
        }
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let (small, big) = if clusters[a].len() <= clusters[b].len() {
                    (a, b)
                } else {
                    (b, a)
                };
                let close = clusters[small].iter().any(|&i| {
                    trees[big]
                        .nearest(&pts[i])
                        .is_some_and(|(_, d)| d < 2.0 * limit)
                });
                if close {
                    raw.push((merge_sorted(&clusters[a], &clusters[b]), si, true));
                }
            }
        }
    }

    let mut out: Vec<PartProposal> = Vec::new();
    for (part, scale, is_union) in raw {
        if let Some(existing) = out.iter_mut().find(|p| p.part == part) {
            // keep the plain-cluster reading of a set produced both ways
            existing.is_union &= is_union;
            continue;
        }
        let confidence = compactness(pts, &part, config.neighbours);
        out.push(PartProposal {
            part,
            confidence,
            scale,
            is_union,
        });
    }
    out.retain(|p| p.confidence > config.tau_conf);
    out.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.part.cmp(&b.part))
    });
    out.truncate(n);
    Ok(out)
}
