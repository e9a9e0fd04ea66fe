//! Static 3-D kd-tree over a subset of cloud points.
//!
//! Every query breaks distance ties by the lower point id so results do not
//! depend on build order.

use crate::cloud::Vec3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    coords: Vec<[f64; 3]>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Candidate {
    d2: f64,
    id: usize,
}

impl KdTree {
    /// Tree over all of `points`; ids are positions in the slice.
    pub fn build(points: &[Vec3]) -> Self {
        let ids: Vec<usize> = (0..points.len()).collect();
        Self::build_subset(points, &ids)
    }

    /// Tree over `points[id]` for each id in `ids`.
    pub fn build_subset(points: &[Vec3], ids: &[usize]) -> Self {
        let mut items: Vec<([f64; 3], usize)> = ids
            .iter()
            .map(|&i| ([points[i].x, points[i].y, points[i].z], i))
            .collect();
        let mut nodes = Vec::new();
        if !items.is_empty() {
            let n = items.len();
            build_node(&mut items, 0, n, &mut nodes);
        }
        let (coords, ids) = items.into_iter().unzip();
        Self { coords, ids, nodes }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Closest point as `(id, distance)`.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = Candidate {
            d2: f64::INFINITY,
            id: usize::MAX,
        };
        self.nearest_rec(0, &q, &mut best);
        Some((best.id, best.d2.sqrt()))
    }

    fn nearest_rec(&self, node: usize, q: &[f64; 3], best: &mut Candidate) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for k in start..end {
                    let c = Candidate {
                        d2: dist2(&self.coords[k], q),
                        id: self.ids[k],
                    };
                    if c < *best {
                        *best = c;
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.d2 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// The `k` closest points sorted by `(distance, id)`.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let mut heap: Vec<Candidate> = Vec::with_capacity(k + 1);
        self.knn_rec(0, &q, k, &mut heap);
        heap.into_iter().map(|c| (c.id, c.d2.sqrt())).collect()
    }

    fn knn_rec(&self, node: usize, q: &[f64; 3], k: usize, best: &mut Vec<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let c = Candidate {
                        d2: dist2(&self.coords[i], q),
                        id: self.ids[i],
                    };
                    if best.len() < k || c < best[best.len() - 1] {
                        let pos = best.partition_point(|b| *b < c);
                        best.insert(pos, c);
                        best.truncate(k);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, k, best);
                if best.len() < k || diff * diff <= best[best.len() - 1].d2 {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }

    /// Ids of all points with distance strictly below `radius`, ascending.
    pub fn within(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            let q = [q.x, q.y, q.z];
            self.within_rec(0, &q, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_rec(&self, node: usize, q: &[f64; 3], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    if dist2(&self.coords[i], q) < r2 {
                        out.push(self.ids[i]);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                if diff <= 0.0 || diff * diff < r2 {
                    self.within_rec(left, q, r2, out);
                }
                if diff >= 0.0 || diff * diff < r2 {
                    self.within_rec(right, q, r2, out);
                }
            }
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn build_node(
    items: &mut [([f64; 3], usize)],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let slot = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return slot;
    }
    let slice = &mut items[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (c, _) in slice.iter() {
        for d in 0..3 {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    let dim = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0);
    if hi[dim] - lo[dim] == 0.0 {
        nodes.push(Node::Leaf { start, end });
        return slot;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| {
        a.0[dim].total_cmp(&b.0[dim]).then(a.1.cmp(&b.1))
    });
    let value = slice[mid].0[dim];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(items, start, start + mid, nodes);
    let right = build_node(items, start + mid, end, nodes);
    nodes[slot] = Node::Split {
        dim,
        value,
        left,
        right,
    };
    slot
}
