//! Point cloud container and small vector helpers shared across the crate.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const NORMAL_TOLERANCE: f64 = 1e-6;

/// A static shape sampled as points, optionally with unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCloud("cloud has no points".into()));
        }
        if let Some(p) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidCloud(format!("point {p} is not finite")));
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: points.len(),
                    found: ns.len(),
                });
            }
            if let Some(i) = ns
                .iter()
                .position(|n| (n.norm() - 1.0).abs() > NORMAL_TOLERANCE)
            {
                return Err(Error::InvalidCloud(format!(
                    "normal {i} is not unit length"
                )));
            }
        }
        Ok(Self { points, normals })
    }

    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Length of the axis-aligned bounding-box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    /// Applies `f` to every point (and `g` to every normal), keeping the layout.
    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3, g: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        let points = self.points.iter().map(f).collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| g(n).normalize()).collect());
        Self::new(points, normals)
    }
}

/// Free-function form used by callers holding only a cloud reference.
pub fn bbox_diagonal(cloud: &PointCloud) -> f64 {
    cloud.bbox_diagonal()
}

pub fn centroid(points: impl IntoIterator<Item = Vec3>) -> Option<Vec3> {
    let mut sum = Vec3::zeros();
    let mut n = 0usize;
    for p in points {
        sum += p;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Principal axes of a point set, sorted by descending variance.
///
/// Returns the centroid, the eigenvalues and the matching unit eigenvectors.
pub fn principal_axes(points: &[Vec3]) -> Option<(Vec3, [f64; 3], [Vec3; 3])> {
    let c = centroid(points.iter().copied())?;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let vals = order.map(|i| eig.eigenvalues[i].max(0.0));
    let vecs = order.map(|i| canonical_direction(&eig.eigenvectors.column(i).into_owned()));
    Some((c, vals, vecs))
}

/// Flips `v` so that its largest-magnitude component is positive.
///
/// Ties between equal magnitudes resolve to the lowest coordinate index.
pub fn canonical_direction(v: &Vec3) -> Vec3 {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        *v
    }
}

/// Angle between two directions treated as undirected lines, in degrees within [0, 90].
pub fn undirected_angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    c.acos().to_degrees()
}

/// Any unit vector perpendicular to `d`.
pub fn any_perpendicular(d: &Vec3) -> Vec3 {
    let helper = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
        Vec3::x()
    } else if d.y.abs() <= d.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    d.cross(&helper).normalize()
}
