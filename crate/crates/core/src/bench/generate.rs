//! Procedural articulated shapes with exact ground-truth mobilities.
//!
//! Shapes are assembled from a few surface primitives (rectangles, tube walls
//! and flat rings) sampled by stratified jittered grids, so the point spacing
//! is close to uniform. Revolute joints are modelled as a static pin inside a
//! moving sleeve with a radial gap, which keeps every part spatially separate
//! while the joint surfaces stay in contact under the true motion.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Unit};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotatedMotion, AnnotatedPart, Annotation};
use crate::cloud::{PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::kinematics::{AxisLine, MotionType};

pub const MIN_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Laptop,
    Door,
    Drawer,
    SwivelChair,
    Wheel,
    Scissors,
    Car,
}

impl Archetype {
    pub const ALL: [Archetype; 7] = [
        Archetype::Laptop,
        Archetype::Door,
        Archetype::Drawer,
        Archetype::SwivelChair,
        Archetype::Wheel,
        Archetype::Scissors,
        Archetype::Car,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Laptop => "laptop",
            Archetype::Door => "door",
            Archetype::Drawer => "drawer",
            Archetype::SwivelChair => "swivel_chair",
            Archetype::Wheel => "wheel",
            Archetype::Scissors => "scissors",
            Archetype::Car => "car",
        }
    }

    fn salt(self) -> u64 {
        // Distinct stream per archetype so equal seeds do not share dimensions.
        0x9e37_79b9_7f4a_7c15u64.wrapping_mul(self as u64 + 1)
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown archetype '{s}'")))
    }
}

/// Geometric tolerances of the generated shapes, as fractions of the bbox diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Radial gap between a pin and its sleeve, and between sliding surfaces.
    pub joint_gap: f64,
    /// Minimum distance between a moving part and static geometry away from its joint.
    pub clearance: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            joint_gap: 0.05,
            clearance: 0.12,
        }
    }
}

/// Generates a shape with the default tolerances.
pub fn generate(archetype: Archetype, seed: u64, n_points: usize) -> Result<Annotation> {
    generate_with(archetype, seed, n_points, &GeneratorConfig::default())
}

pub fn generate_with(
    archetype: Archetype,
    seed: u64,
    n_points: usize,
    config: &GeneratorConfig,
) -> Result<Annotation> {
    if n_points < MIN_POINTS {
        return Err(Error::CloudTooSmall {
            found: n_points,
            min: MIN_POINTS,
        });
    }
    if !(config.joint_gap > 0.0 && config.clearance > 0.0) {
        return Err(Error::Domain(
            "generator tolerances must be positive".into(),
        ));
    }
    let mut dim_rng = ChaCha8Rng::seed_from_u64(seed ^ archetype.salt());
    let dims = Dims::draw(archetype, &mut dim_rng);

    // The tolerances are relative to the diagonal, which itself depends a little
    // on the gap, so settle it by a short fixed-point iteration.
    let mut diag = dims.nominal_diag;
    let mut parts = Vec::new();
    for _ in 0..4 {
        let tol = Tolerances {
            gap: config.joint_gap * diag,
            clearance: config.clearance * diag,
        };
        parts = build(archetype, &dims, &tol);
        diag = primitive_diag(&parts);
    }

    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ archetype.salt());
    sample_shape(archetype, seed, n_points, &parts, &mut sample_rng)
}

struct Tolerances {
    gap: f64,
    clearance: f64,
}

/// Seed-dependent shape proportions. Every value is a multiplier near 1 or an angle.
struct Dims {
    scale: [f64; 4],
    angle: f64,
    nominal_diag: f64,
}

impl Dims {
    fn draw(archetype: Archetype, rng: &mut ChaCha8Rng) -> Self {
        let mut scale = [1.0; 4];
        for s in &mut scale {
            *s = rng.random_range(0.9..1.1);
        }
        let (lo, hi, nominal_diag) = match archetype {
            Archetype::Laptop => (100.0, 125.0, 1.5),
            Archetype::Door => (40.0, 65.0, 2.6),
            Archetype::Drawer => (0.0, 1.0, 1.4),
            Archetype::SwivelChair => (0.0, 360.0, 1.2),
            Archetype::Wheel => (0.0, 360.0, 1.3),
            Archetype::Scissors => (25.0, 40.0, 0.95),
            Archetype::Car => (0.0, 1.0, 3.3),
        };
        let angle = rng.random_range(lo..hi);
        Self {
            scale,
            angle,
            nominal_diag,
        }
    }
}

#[derive(Debug, Clone)]
enum Primitive {
    /// Parallelogram `origin + s·u + t·v`, single sided.
    Rect {
        origin: Vec3,
        u: Vec3,
        v: Vec3,
        normal: Vec3,
    },
    /// Open cylinder wall from `base` along `axis` with outward normals.
    Tube {
        base: Vec3,
        axis: Vec3,
        radius: f64,
        length: f64,
    },
    /// Flat annulus (a disc when `r_in` is zero) facing `normal`.
    Ring {
        center: Vec3,
        normal: Vec3,
        r_in: f64,
        r_out: f64,
    },
}

impl Primitive {
    fn area(&self) -> f64 {
        match self {
            Primitive::Rect { u, v, .. } => u.cross(v).norm(),
            Primitive::Tube { radius, length, .. } => std::f64::consts::TAU * radius * length,
            Primitive::Ring { r_in, r_out, .. } => {
                std::f64::consts::PI * (r_out * r_out - r_in * r_in)
            }
        }
    }

    /// Extreme points used to estimate the shape bounding box before sampling.
    fn hull_points(&self) -> Vec<Vec3> {
        match self {
            Primitive::Rect { origin, u, v, .. } => {
                vec![*origin, origin + u, origin + v, origin + u + v]
            }
            Primitive::Tube {
                base,
                axis,
                radius,
                length,
            } => {
                let (e1, e2) = frame(axis);
                let mut out = Vec::new();
                for k in 0..16 {
                    let a = k as f64 * std::f64::consts::TAU / 16.0;
                    let r = (e1 * a.cos() + e2 * a.sin()) * *radius;
                    out.push(base + r);
                    out.push(base + r + axis * *length);
                }
                out
            }
            Primitive::Ring {
                center,
                normal,
                r_out,
                ..
            } => {
                let (e1, e2) = frame(normal);
                (0..16)
                    .map(|k| {
                        let a = k as f64 * std::f64::consts::TAU / 16.0;
                        center + (e1 * a.cos() + e2 * a.sin()) * *r_out
                    })
                    .collect()
            }
        }
    }

    fn sample(
        &self,
        n: usize,
        rng: &mut ChaCha8Rng,
        points: &mut Vec<Vec3>,
        normals: &mut Vec<Vec3>,
    ) {
        if n == 0 {
            return;
        }
        match self {
            Primitive::Rect {
                origin,
                u,
                v,
                normal,
            } => {
                for (s, t) in stratified(n, u.norm() / v.norm(), rng) {
                    points.push(origin + u * s + v * t);
                    normals.push(*normal);
                }
            }
            Primitive::Tube {
                base,
                axis,
                radius,
                length,
            } => {
                let (e1, e2) = frame(axis);
                let aspect = std::f64::consts::TAU * radius / length;
                for (s, t) in stratified(n, aspect, rng) {
                    let a = s * std::f64::consts::TAU;
                    let radial = e1 * a.cos() + e2 * a.sin();
                    points.push(base + radial * *radius + axis * (t * length));
                    normals.push(radial);
                }
            }
            Primitive::Ring {
                center,
                normal,
                r_in,
                r_out,
            } => {
                let (e1, e2) = frame(normal);
                let mid = 0.5 * (r_in + r_out);
                let aspect = std::f64::consts::TAU * mid / (r_out - r_in);
                for (s, t) in stratified(n, aspect, rng) {
                    let a = s * std::f64::consts::TAU;
                    // equal-area radial mapping
                    let r = (r_in * r_in + t * (r_out * r_out - r_in * r_in)).sqrt();
                    points.push(center + (e1 * a.cos() + e2 * a.sin()) * r);
                    normals.push(*normal);
                }
            }
        }
    }
}

/// `n` jittered stratified samples of the unit square for a patch of the given
/// width/height ratio: rows of near-equal size, one jittered point per cell.
fn stratified(n: usize, aspect: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let rows = ((n as f64 / aspect).sqrt().round() as usize).clamp(1, n);
    let mut out = Vec::with_capacity(n);
    for j in 0..rows {
        let lo = j * n / rows;
        let hi = (j + 1) * n / rows;
        let cols = hi - lo;
        for i in 0..cols {
            let s = (i as f64 + rng.random_range(0.25..0.75)) / cols as f64;
            let t = (j as f64 + rng.random_range(0.25..0.75)) / rows as f64;
            out.push((s, t));
        }
    }
    out
}

/// Two unit vectors completing `axis` to a right-handed frame.
fn frame(axis: &Vec3) -> (Vec3, Vec3) {
    let e1 = crate::cloud::any_perpendicular(axis);
    let e2 = axis.cross(&e1).normalize();
    (e1, e2)
}

struct PartSpec {
    prims: Vec<Primitive>,
    motions: Vec<AnnotatedMotion>,
}

impl PartSpec {
    fn fixed(prims: Vec<Primitive>) -> Self {
        Self {
            prims,
            motions: Vec::new(),
        }
    }
}

fn motion(motion_type: MotionType, point: Vec3, direction: Vec3) -> AnnotatedMotion {
    AnnotatedMotion {
        motion_type,
        line: AxisLine {
            point,
            direction: crate::cloud::canonical_direction(&direction.normalize()),
        },
    }
}

fn rect(origin: Vec3, u: Vec3, v: Vec3) -> Primitive {
    Primitive::Rect {
        origin,
        u,
        v,
        normal: u.cross(&v).normalize(),
    }
}

/// Closed axis-aligned box surface.
fn aabb(lo: Vec3, hi: Vec3) -> Vec<Primitive> {
    let d = hi - lo;
    let (x, y, z) = (Vec3::x() * d.x, Vec3::y() * d.y, Vec3::z() * d.z);
    vec![
        rect(lo, z, y),
        rect(lo + x, y, z),
        rect(lo, x, z),
        rect(lo + y, z, x),
        rect(lo, y, x),
        rect(lo + z, x, y),
    ]
}

/// Closed box surface with edges `a`, `b`, `c` from `corner` (right-handed order).
fn oriented_box(corner: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec<Primitive> {
    vec![
        rect(corner, c, b),
        rect(corner + a, b, c),
        rect(corner, a, c),
        rect(corner + b, c, a),
        rect(corner, b, a),
        rect(corner + c, a, b),
    ]
}

fn tube(base: Vec3, axis: Vec3, radius: f64, length: f64) -> Primitive {
    Primitive::Tube {
        base,
        axis: axis.normalize(),
        radius,
        length,
    }
}

fn ring(center: Vec3, normal: Vec3, r_in: f64, r_out: f64) -> Primitive {
    Primitive::Ring {
        center,
        normal: normal.normalize(),
        r_in,
        r_out,
    }
}

/// Solid cylinder surface: wall plus both end discs.
fn puck(base: Vec3, axis: Vec3, radius: f64, length: f64) -> Vec<Primitive> {
    let a = axis.normalize();
    vec![
        tube(base, a, radius, length),
        ring(base, -a, 0.0, radius),
        ring(base + a * length, a, 0.0, radius),
    ]
}

fn rotate_about(axis: &Vec3, degrees: f64, v: &Vec3) -> Vec3 {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), degrees.to_radians()) * v
}

fn primitive_diag(parts: &[PartSpec]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in parts
        .iter()
        .flat_map(|p| &p.prims)
        .flat_map(|p| p.hull_points())
    {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    (hi - lo).norm()
}

fn build(archetype: Archetype, dims: &Dims, tol: &Tolerances) -> Vec<PartSpec> {
    match archetype {
        Archetype::Laptop => laptop(dims, tol),
        Archetype::Door => door(dims, tol),
        Archetype::Drawer => drawer(dims, tol),
        Archetype::SwivelChair => swivel_chair(dims, tol),
        Archetype::Wheel => wheel(dims, tol),
        Archetype::Scissors => scissors(dims, tol),
        Archetype::Car => car(dims, tol),
    }
}

/// Interleaved hinge: solid knuckles on the pin alternate with hollow moving
/// knuckles, so sliding along the pin collides at every knuckle face while
/// turning about it keeps all joint distances.
struct Hinge {
    fixed: Vec<Primitive>,
    moving: Vec<Primitive>,
    /// Radius of the static knuckles.
    outer_r: f64,
    /// Outer radius of the moving knuckles.
    moving_r: f64,
    /// Start offset and length of each moving knuckle along the axis.
    spans: Vec<(f64, f64)>,
}

fn piano_hinge(origin: Vec3, axis: Vec3, length: f64, n_moving: usize, g: f64) -> Hinge {
    let pin_r = 0.015;
    let bore = pin_r + g;
    let moving_r = bore + 0.03;
    let outer_r = moving_r + g;
    let count = 2 * n_moving + 1;
    let seg = (length - 2.0 * n_moving as f64 * g) / count as f64;
    let mut fixed = Vec::new();
    let mut moving = Vec::new();
    let mut spans = Vec::new();
    for k in 0..count {
        let s = k as f64 * (seg + g);
        let at = origin + axis * s;
        if k % 2 == 0 {
            fixed.extend(puck(at, axis, outer_r, seg));
        } else {
            moving.push(tube(at, axis, bore, seg));
            moving.push(tube(at, axis, moving_r, seg));
            moving.push(ring(at, -axis, bore, moving_r));
            moving.push(ring(at + axis * seg, axis, bore, moving_r));
            fixed.push(tube(at - axis * g, axis, pin_r, seg + 2.0 * g));
            spans.push((s, seg));
        }
    }
    Hinge {
        fixed,
        moving,
        outer_r,
        moving_r,
        spans,
    }
}

/// Flat leaf hanging off the moving knuckles: one tab per knuckle out to
/// `root`, then a sheet of `len` along `u` spanning `width` from the axis origin.
fn hinge_leaf(
    h: &Hinge,
    origin: Vec3,
    axis: Vec3,
    u: Vec3,
    root: f64,
    width: f64,
    len: f64,
) -> Vec<Primitive> {
    let mut out: Vec<Primitive> = h
        .spans
        .iter()
        .map(|&(s, l)| {
            rect(
                origin + axis * s + u * h.moving_r,
                axis * l,
                u * (1.2 * (root - h.moving_r)),
            )
        })
        .collect();
    out.push(rect(origin + u * root, axis * width, u * len));
    out
}

fn laptop(d: &Dims, tol: &Tolerances) -> Vec<PartSpec> {
    let g = tol.gap;
    let width = 1.0 * d.scale[0];
    let depth = 0.7 * d.scale[1];
    let thick = 0.08 * d.scale[2];
    let lid_len = 0.62 * depth;

    // probe the radius first so the static knuckles can sit against the base
    let r = piano_hinge(Vec3::zeros(), Vec3::x(), width, 2, g).outer_r;
    let origin = Vec3::new(0.0, depth + r, 0.5 * thick);
    let h = piano_hinge(origin, Vec3::x(), width, 2, g);

    let open = d.angle.to_radians();
    let u = Vec3::new(0.0, -open.cos(), open.sin());
    let root = h.outer_r + tol.clearance;
    let mut lid = h.moving.clone();
    lid.extend(hinge_leaf(&h, origin, Vec3::x(), u, root, width, lid_len));

    let mut base = aabb(Vec3::zeros(), Vec3::new(width, depth, thick));
    base.extend(h.fixed);
    vec![
        PartSpec::fixed(base),
        PartSpec {
            prims: lid,
            motions: vec![motion(MotionType::Rotation, origin, Vec3::x())],
        },
    ]
}

fn door(d: &Dims, tol: &Tolerances) -> Vec<PartSpec> {
    let g = tol.gap;
    let height = 2.0 * d.scale[0];
    let panel_w = 0.9 * d.scale[1];
    let jamb_t = 0.15;
    let jamb_d = 0.3 * d.scale[2];
    let yd = 0.5 * jamb_d;

    let r = piano_hinge(Vec3::zeros(), Vec3::z(), height, 2, g).outer_r;
    let origin = Vec3::new(r, 0.0, 0.0);
    let h = piano_hinge(origin, Vec3::z(), height, 2, g);
    let root = h.outer_r + tol.clearance;
    let right = origin.x + panel_w;

    let mut frame = aabb(Vec3::new(-jamb_t, -yd, 0.0), Vec3::new(0.0, yd, height));
    frame.extend(aabb(
        Vec3::new(right, -yd, 0.0),
        Vec3::new(right + jamb_t, yd, height),
    ));
    frame.extend(aabb(
        Vec3::new(-jamb_t, -yd, height),
        Vec3::new(right + jamb_t, yd, height + jamb_t),
    ));
    frame.extend(h.fixed.iter().cloned());

    let open = d.angle.to_radians();
    let u = Vec3::new(open.cos(), open.sin(), 0.0);
    let mut panel = h.moving.clone();
    // the panel stays clear of the head and the floor line
    let z0 = tol.clearance;
    panel.extend(h.spans.iter().map(|&(s, l)| {
        rect(
            origin + Vec3::z() * s + u * h.moving_r,
            u * (1.2 * (root - h.moving_r)),
            Vec3::z() * l,
        )
    }));
    panel.push(rect(
        origin + Vec3::z() * z0 + u * root,
        u * panel_w,
        Vec3::z() * (height - 2.0 * z0),
    ));
    vec![
        PartSpec::fixed(frame),
        PartSpec {
            prims: panel,
            motions: vec![motion(MotionType::Rotation, origin, Vec3::z())],
        },
    ]
}

fn drawer(d: &Dims, tol: &Tolerances) -> Vec<PartSpec> {
    let g = tol.gap;
    let w = 0.8 * d.scale[0];
    let depth = 0.75 * d.scale[1];
    let h = 0.35 * d.scale[2];
    let len = 0.5 * depth / 0.75;
    let pull = (0.22 + 0.06 * d.angle) * depth / 0.75;

    // thin carcass: the inner faces of the five walls
    let (x, y, z) = (Vec3::x() * w, Vec3::y() * depth, Vec3::z() * h);
    let cabinet = vec![
        rect(Vec3::zeros(), y, z),
        rect(x, z, y),
        rect(Vec3::zeros(), x, y),
        rect(z, y, x),
        rect(y, z, x),
    ];

    let lo = Vec3::new(g, -pull, g);
    let hi = Vec3::new(w - g, -pull + len, h - g);
    let e = hi - lo;
    let (ex, ey, ez) = (Vec3::x() * e.x, Vec3::y() * e.y, Vec3::z() * e.z);
    // open-topped tray
    let tray = vec![
        rect(lo, ez, ey),
        rect(lo + ex, ey, ez),
        rect(lo, ex, ez),
        rect(lo + ey, ez, ex),
        rect(lo, ey, ex),
    ];
    let center = 0.5 * (lo + hi);
    vec![
        PartSpec::fixed(cabinet),
        PartSpec {
            prims: tray,
            motions: vec![motion(MotionType::Translation, center, Vec3::y())],
        },
    ]
}

fn swivel_chair(d: &Dims, tol: &Tolerances) -> Vec<PartSpec> {
    let g = tol.gap;
    let base_r = 0.34 * d.scale[0];
    let base_h = 0.08;
    let column_r = 0.03;
    let column_top = 0.5 * d.scale[1];
    let inserted = 0.2;
    let sleeve_r = column_r + g;
    let seat_r = 0.22 * d.scale[2];
    let seat_h = 0.07;
    // The column top stays clear of the seat underside through a full stroke.
    let headroom = 0.15 * (2.0 * base_r).hypot(column_top + 0.6) + sleeve_r + tol.clearance * 0.25;
    let sleeve_lo = column_top - inserted;
    let seat_lo = column_top + headroom;

    let mut base = puck(Vec3::zeros(), Vec3::z(), base_r, base_h);
    base.push(tube(
        Vec3::new(0.0, 0.0, base_h),
        Vec3::z(),
        column_r,
        column_top - base_h,
    ));
    base.push(ring(
        Vec3::new(0.0, 0.0, column_top),
        Vec3::z(),
        0.0,
        column_r,
    ));

    let mut seat = vec![
        tube(
            Vec3::new(0.0, 0.0, sleeve_lo),
            Vec3::z(),
            sleeve_r,
            seat_lo - sleeve_lo,
        ),
        tube(Vec3::new(0.0, 0.0, seat_lo), Vec3::z(), seat_r, seat_h),
        ring(Vec3::new(0.0, 0.0, seat_lo), -Vec3::z(), sleeve_r, seat_r),
        ring(
            Vec3::new(0.0, 0.0, seat_lo + seat_h),
            Vec3::z(),
            0.0,
            seat_r,
        ),
    ];
    // a small handle breaks the seat's symmetry the way a lever would
    let lever = rotate_about(&Vec3::z(), d.angle, &Vec3::x());
    let side = Vec3::z().cross(&lever);
    seat.extend(oriented_box(
        Vec3::new(0.0, 0.0, seat_lo - 0.03) + lever * (seat_r - 0.02) - side * 0.015,
        lever * 0.08,
        side * 0.03,
        Vec3::z() * 0.03,
    ));

    let axis_point = Vec3::new(0.0, 0.0, column_top);
    vec![
        PartSpec::fixed(base),
        PartSpec {
            prims: seat,
            motions: vec![
                motion(MotionType::Rotation, axis_point, Vec3::z()),
                motion(MotionType::Translation, axis_point, Vec3::z()),
            ],
        },
    ]
}

fn wheel(d: &Dims, tol: &Tolerances) -> Vec<PartSpec> {
    let g = tol.gap;
    let radius = 0.3 * d.scale[0];
    let width = 0.1 * d.scale[1];
    let axle_r = 0.02;
    let hub_r = axle_r + g;
    let plate_h = 0.05;
    let center = Vec3::new(0.0, 0.0, plate_h + tol.clearance + radius);
    let arm_t = 0.04;
    let arm_y = 0.5 * width + g;
    let half_w = 0.5 * width;

    let mut stand = aabb(
        Vec3::new(-0.42 * d.scale[2], -0.25, 0.0),
        Vec3::new(0.42 * d.scale[2], 0.25, plate_h),
    );
    for (y0, y1) in [(arm_y, arm_y + arm_t), (-arm_y - arm_t, -arm_y)] {
        stand.extend(aabb(
            Vec3::new(-0.04, y0, plate_h - 0.01),
            Vec3::new(0.04, y1, center.z + 0.06),
        ));
    }
    let axle_half = arm_y + arm_t;
    stand.push(tube(
        center - Vec3::y() * axle_half,
        Vec3::y(),
        axle_r,
        2.0 * axle_half,
    ));

    let wheel = vec![
        tube(center - Vec3::y() * half_w, Vec3::y(), radius, width),
        tube(center - Vec3::y() * half_w, Vec3::y(), hub_r, width),
        ring(center + Vec3::y() * half_w, Vec3::y(), hub_r, radius),
        ring(center - Vec3::y() * half_w, -Vec3::y(), hub_r, radius),
    ];
    vec![
        PartSpec::fixed(stand),
        PartSpec {
            prims: wheel,
            motions: vec![motion(MotionType::Rotation, center, Vec3::y())],
        },
    ]
}

fn scissors(d: &Dims, tol: &Tolerances) -> Vec<PartSpec> {
    let g = tol.gap;
    let t = 0.02;
    let hub_r = (0.1 + g).max(0.14);
    let pin_r = 0.015;
    let hole_r = pin_r + g;
    let start = 0.5 * (hole_r + hub_r);
    let blade_w = 0.06;
    let half = 0.5 * d.angle;

    let strip = |z0: f64, angle: f64, from: f64, len: f64, w: f64| {
        let dir = rotate_about(&Vec3::z(), angle, &Vec3::x());
        let side = Vec3::z().cross(&dir);
        oriented_box(
            Vec3::new(0.0, 0.0, z0) + dir * from - side * (0.5 * w),
            dir * len,
            side * w,
            Vec3::z() * t,
        )
    };

    let mut fixed = puck(Vec3::zeros(), Vec3::z(), hub_r, t);
    fixed.extend(strip(0.0, half, 0.5 * hub_r, 0.58 * d.scale[0], blade_w));
    fixed.extend(strip(
        0.0,
        180.0 + half,
        0.5 * hub_r,
        0.3 * d.scale[1],
        1.3 * blade_w,
    ));
    let pin_top = 2.0 * t + 2.0 * g;
    fixed.push(tube(Vec3::new(0.0, 0.0, t), Vec3::z(), pin_r, pin_top - t));
    fixed.push(ring(Vec3::new(0.0, 0.0, pin_top), Vec3::z(), 0.0, pin_r));

    let z1 = t + g;
    let mut moving = vec![
        tube(Vec3::new(0.0, 0.0, z1), Vec3::z(), hub_r, t),
        tube(Vec3::new(0.0, 0.0, z1), Vec3::z(), hole_r, t),
        ring(Vec3::new(0.0, 0.0, z1), -Vec3::z(), hole_r, hub_r),
        ring(Vec3::new(0.0, 0.0, z1 + t), Vec3::z(), hole_r, hub_r),
    ];
    moving.extend(strip(z1, -half, start, 0.46 * d.scale[2], blade_w));
    moving.extend(strip(
        z1,
        180.0 - half,
        start,
        0.24 * d.scale[3],
        1.3 * blade_w,
    ));

    vec![
        PartSpec::fixed(fixed),
        PartSpec {
            prims: moving,
            motions: vec![motion(MotionType::Rotation, Vec3::zeros(), Vec3::z())],
        },
    ]
}

fn car(d: &Dims, tol: &Tolerances) -> Vec<PartSpec> {
    let g = tol.gap;
    let len = 2.4 * d.scale[0];
    let wid = 1.2 * d.scale[1];
    let body_h = 0.4 * d.scale[2];
    let radius = 0.36 * d.scale[3];
    let tread = 0.2;
    let clear = tol.clearance;
    let body_lo = 2.0 * radius + clear;
    let strut_r = 0.04;
    let axle_r = 0.03;
    let hub_r = axle_r + g;
    let bracket = 0.06;

    let mut body = aabb(
        Vec3::new(0.0, 0.0, body_lo),
        Vec3::new(len, wid, body_lo + body_h),
    );
    let mut parts = Vec::new();
    let half = 0.5 * tread;
    for (x, front) in [(len - 0.45, true), (0.45, false)] {
        for left in [true, false] {
            // outward = away from the body along y
            let out = if left { -1.0 } else { 1.0 };
            let side_y = if left { 0.0 } else { wid };
            let wy = side_y + out * (clear + half);
            let c = Vec3::new(x, wy, radius);
            let outer = c + Vec3::y() * (out * half);
            let inner = c - Vec3::y() * (out * half);
            let mut prims = vec![tube(c - Vec3::y() * half, Vec3::y(), radius, tread)];
            if front {
                prims.push(ring(outer, Vec3::y() * out, 0.0, radius));
                prims.push(ring(inner, -Vec3::y() * out, 0.0, radius));
                let strut_lo = 2.0 * radius + g;
                let strut_hi = body_lo + 0.5 * body_h;
                // a pad over the tread gives the steering joint a real bearing surface
                let pad_h = 0.04;
                body.extend(puck(Vec3::new(x, wy, strut_lo), Vec3::z(), half, pad_h));
                body.push(tube(
                    Vec3::new(x, wy, strut_lo + pad_h),
                    Vec3::z(),
                    strut_r,
                    strut_hi - strut_lo - pad_h,
                ));
                let (y0, y1) = ordered(wy - out * strut_r, side_y + out * 0.01);
                body.extend(aabb(
                    Vec3::new(x - 0.05, y0, strut_hi - 0.08),
                    Vec3::new(x + 0.05, y1, strut_hi),
                ));
                parts.push(PartSpec {
                    prims,
                    motions: vec![
                        motion(MotionType::Rotation, c, Vec3::z()),
                        motion(MotionType::Rotation, c, Vec3::y()),
                    ],
                });
            } else {
                prims.push(ring(outer, Vec3::y() * out, hub_r, radius));
                prims.push(ring(inner, -Vec3::y() * out, hub_r, radius));
                prims.push(tube(c - Vec3::y() * half, Vec3::y(), hub_r, tread));
                // hanger: vertical plate beside the inner face, arm up into the body
                let b0 = inner.y - out * g;
                let b1 = b0 - out * bracket;
                let (y0, y1) = ordered(b0, b1);
                body.extend(aabb(
                    Vec3::new(x - 0.06, y0, radius - 0.06),
                    Vec3::new(x + 0.06, y1, body_lo + 0.08),
                ));
                let (y0, y1) = ordered(b1, side_y + out * 0.01);
                body.extend(aabb(
                    Vec3::new(x - 0.06, y0, body_lo),
                    Vec3::new(x + 0.06, y1, body_lo + 0.08),
                ));
                let stub_in = b1;
                let stub_out = outer.y;
                let (s0, s1) = ordered(stub_in, stub_out);
                body.push(tube(Vec3::new(x, s0, radius), Vec3::y(), axle_r, s1 - s0));
                parts.push(PartSpec {
                    prims,
                    motions: vec![motion(MotionType::Rotation, c, Vec3::y())],
                });
            }
        }
    }
    let mut out = vec![PartSpec::fixed(body)];
    out.extend(parts);
    out
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Splits `n` points across primitives in proportion to area (largest remainder).
fn allocate(areas: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = areas.iter().sum();
    let exact: Vec<f64> = areas.iter().map(|a| a / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..areas.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn sample_shape(
    archetype: Archetype,
    seed: u64,
    n: usize,
    parts: &[PartSpec],
    rng: &mut ChaCha8Rng,
) -> Result<Annotation> {
    let prims: Vec<(usize, &Primitive)> = parts
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| p.prims.iter().map(move |q| (pi, q)))
        .collect();
    let areas: Vec<f64> = prims.iter().map(|(_, p)| p.area()).collect();
    let counts = allocate(&areas, n);

    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for ((pi, prim), &k) in prims.iter().zip(&counts) {
        prim.sample(k, rng, &mut points, &mut normals);
        labels.extend(std::iter::repeat_n(*pi, k));
    }

    // Scatter part membership across the index range.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let points: Vec<Vec3> = order.iter().map(|&i| points[i]).collect();
    let normals: Vec<Vec3> = order.iter().map(|&i| normals[i]).collect();
    let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();

    let parts = parts
        .iter()
        .enumerate()
        .map(|(pi, spec)| AnnotatedPart {
            indices: (0..n).filter(|&i| labels[i] == pi).collect(),
            motions: spec.motions.clone(),
        })
        .collect();
    let ann = Annotation {
        shape_id: format!("{}_{}", archetype.name(), seed),
        cloud: PointCloud::new(points, Some(normals))?,
        parts,
    };
    ann.validate()?;
    Ok(ann)
}
