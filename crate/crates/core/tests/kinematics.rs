use mobility_core::bench::{generate, Archetype};
use mobility_core::kinematics::*;
use mobility_core::{Error, PointCloud, Vec3};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn z_axis() -> AxisLine {
    AxisLine::new(Vec3::zeros(), Vec3::z()).unwrap()
}

fn rot(deg: f64) -> MotionAmount {
    MotionAmount {
        angle_deg: deg,
        distance: 0.0,
    }
}

#[test]
fn quarter_turn_about_z() {
    let out =
        transform_about_axis(&Vec3::x(), &z_axis(), MotionType::Rotation, rot(90.0)).unwrap();
    assert_abs_diff_eq!(out, Vec3::y(), epsilon = 1e-12);
    let same =
        transform_about_axis(&Vec3::x(), &z_axis(), MotionType::Rotation, rot(0.0)).unwrap();
    assert_abs_diff_eq!(same, Vec3::x(), epsilon = 1e-12);
}

#[test]
fn rotation_about_offset_axis() {
    // translate-rotate-translate: (2,0,0) - (0,1,0) = (2,-1,0); (x,y) -> (-y,x) gives (1,2,0);
    // adding the axis point back yields (1,3,0).
    let axis = AxisLine::new(Vec3::new(0.0, 1.0, 0.0), Vec3::z()).unwrap();
    let p = Vec3::new(2.0, 0.0, 0.0);
    let out = transform_about_axis(&p, &axis, MotionType::Rotation, rot(90.0)).unwrap();
    let shifted = p - axis.point;
    let turned = Vec3::new(-shifted.y, shifted.x, shifted.z);
    assert_abs_diff_eq!(
        turned + axis.point,
        Vec3::new(1.0, 3.0, 0.0),
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(out, Vec3::new(1.0, 3.0, 0.0), epsilon = 1e-12);
}

#[test]
fn non_unit_direction_is_rejected() {
    let axis = AxisLine {
        point: Vec3::zeros(),
        direction: Vec3::new(0.0, 0.0, 2.0),
    };
    let r = transform_about_axis(&Vec3::x(), &axis, MotionType::Rotation, rot(10.0));
    assert!(matches!(r, Err(Error::InvalidAxis(_))));
}

#[test]
fn screw_rotates_then_translates() {
    let amount = MotionAmount {
        angle_deg: 90.0,
        distance: 0.5,
    };
    let out = transform_about_axis(
        &Vec3::x(),
        &z_axis(),
        MotionType::RotationTranslation,
        amount,
    )
    .unwrap();
    assert_abs_diff_eq!(out, Vec3::new(0.0, 1.0, 0.5), epsilon = 1e-12);
    let iso = motion_isometry(&z_axis(), MotionType::RotationTranslation, amount);
    let via_iso = iso.transform_point(&Vec3::x().into()).coords;
    assert_abs_diff_eq!(via_iso, out, epsilon = 1e-12);
}

#[test]
fn axis_distances() {
    assert_abs_diff_eq!(axis_point_distance(&Vec3::x(), &z_axis()), 1.0);
    assert_abs_diff_eq!(
        axis_point_distance(&Vec3::new(0.0, 0.0, 4.0), &z_axis()),
        0.0
    );
    assert_abs_diff_eq!(
        axis_point_distance(&Vec3::new(3.0, 4.0, 7.0), &z_axis()),
        5.0,
        epsilon = 1e-12
    );
}

fn cloud(points: &[[f64; 3]]) -> PointCloud {
    PointCloud::from_points(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
        .unwrap()
}

#[test]
fn move_normalizes_rotation_by_axis_distance() {
    let c = cloud(&[[2.0, 0.0, 0.0], [-2.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    let m = Mobility::from_line(vec![0], MotionType::Rotation, &z_axis(), &c).unwrap();
    let v = move_vector(0, &c, &m, &MoveAmounts::default());
    assert_abs_diff_eq!(v, Vec3::new(-1.0, 1.0, 0.0), epsilon = 1e-12);
    assert_eq!(
        move_vector(1, &c, &m, &MoveAmounts::default()),
        Vec3::zeros()
    );
}

#[test]
fn move_translation_is_not_normalized() {
    // diag = 10 along x; 0.3 = 0.03 * 10
    let c = cloud(&[[5.0, 5.0, 5.0], [-5.0, 5.0, 5.0]]);
    let line = AxisLine::new(Vec3::zeros(), Vec3::z()).unwrap();
    let m = Mobility::from_line(vec![0], MotionType::Translation, &line, &c).unwrap();
    let amounts = MoveAmounts {
        translation_delta: 0.03,
        ..MoveAmounts::default()
    };
    let v = move_vector(0, &c, &m, &amounts);
    assert_abs_diff_eq!(v, Vec3::new(0.0, 0.0, 0.3), epsilon = 1e-12);
    let normalized = MoveAmounts {
        normalize_translation: true,
        ..amounts
    };
    let dist = line.distance(&c.point(0));
    assert_abs_diff_eq!(
        move_vector(0, &c, &m, &normalized),
        v / dist,
        epsilon = 1e-12
    );
}

#[test]
fn flow_examples() {
    let c = cloud(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
    let amounts = MoveAmounts::default();
    assert_eq!(mobility_to_flow(&c, &[], &amounts), MotionFlow::zeros(2));
    let m = Mobility::from_line(vec![0], MotionType::Rotation, &z_axis(), &c).unwrap();
    let flow = mobility_to_flow(&c, &[m], &amounts);
    assert_abs_diff_eq!(flow.vectors[0], Vec3::new(-1.0, 1.0, 0.0), epsilon = 1e-12);
    assert_eq!(flow.vectors[1], Vec3::zeros());

    // bbox diagonal 10 along x
    let c = cloud(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
    let line = AxisLine::new(Vec3::zeros(), Vec3::x()).unwrap();
    let m = Mobility::from_line(vec![0, 1], MotionType::Translation, &line, &c).unwrap();
    let flow = mobility_to_flow(&c, &[m], &amounts);
    for v in &flow.vectors {
        assert_abs_diff_eq!(*v, Vec3::new(1.5, 0.0, 0.0), epsilon = 1e-12);
    }
}

#[test]
fn later_mobility_wins_on_overlap() {
    let c = cloud(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
    let a = Mobility::from_line(vec![0, 1], MotionType::Rotation, &z_axis(), &c).unwrap();
    let b = Mobility::from_line(
        vec![0],
        MotionType::Translation,
        &AxisLine::new(Vec3::zeros(), Vec3::x()).unwrap(),
        &c,
    )
    .unwrap();
    let flow = mobility_to_flow(&c, &[a, b], &MoveAmounts::default());
    let diag = c.bbox_diagonal();
    assert_abs_diff_eq!(
        flow.vectors[0],
        Vec3::new(0.15 * diag, 0.0, 0.0),
        epsilon = 1e-12
    );
}

#[test]
fn mobility_rejects_bad_parts() {
    let c = cloud(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
    assert!(Mobility::from_line(vec![], MotionType::Rotation, &z_axis(), &c).is_err());
    assert!(Mobility::from_line(vec![0, 0], MotionType::Rotation, &z_axis(), &c).is_err());
    assert!(Mobility::from_line(vec![5], MotionType::Rotation, &z_axis(), &c).is_err());
}

fn arb_vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn arb_line() -> impl Strategy<Value = AxisLine> {
    (arb_vec3(2.0), arb_vec3(1.0))
        .prop_filter("direction must not vanish", |(_, d)| d.norm() > 0.1)
        .prop_map(|(p, d)| AxisLine::through(p, d).unwrap())
}

fn arb_type() -> impl Strategy<Value = MotionType> {
    prop::sample::select(MotionType::ALL.to_vec())
}

proptest! {
    #[test]
    fn zero_amount_is_identity(p in arb_vec3(3.0), line in arb_line(), ty in arb_type()) {
        let out = transform_about_axis(&p, &line, ty, MotionAmount::default()).unwrap();
        prop_assert!((out - p).norm() < 1e-9);
    }

    #[test]
    fn rotation_is_undone_by_its_negative(p in arb_vec3(3.0), line in arb_line(), deg in -180.0f64..180.0) {
        let fwd = MotionAmount { angle_deg: deg, distance: 0.0 };
        let there = transform_about_axis(&p, &line, MotionType::Rotation, fwd).unwrap();
        let back = transform_about_axis(&there, &line, MotionType::Rotation, fwd.scaled(-1.0)).unwrap();
        prop_assert!((back - p).norm() < 1e-9);
    }

    #[test]
    fn motions_are_rigid(
        a in arb_vec3(3.0),
        b in arb_vec3(3.0),
        line in arb_line(),
        ty in arb_type(),
        deg in -180.0f64..180.0,
        dist in -2.0f64..2.0,
    ) {
        let amount = MotionAmount { angle_deg: deg, distance: dist };
        let ta = transform_about_axis(&a, &line, ty, amount).unwrap();
        let tb = transform_about_axis(&b, &line, ty, amount).unwrap();
        prop_assert!(((ta - tb).norm() - (a - b).norm()).abs() < 1e-9);
    }

    #[test]
    fn move_is_translation_invariant(
        pts in prop::collection::vec(arb_vec3(1.0), 4..20),
        line in arb_line(),
        ty in arb_type(),
        shift in arb_vec3(50.0),
    ) {
        let cloud = PointCloud::from_points(pts.clone()).unwrap();
        prop_assume!(cloud.bbox_diagonal() > 0.1);
        let part: Vec<usize> = (0..pts.len() / 2).collect();
        let m = Mobility::from_line(part.clone(), ty, &line, &cloud).unwrap();
        let moved = PointCloud::from_points(pts.iter().map(|p| p + shift).collect()).unwrap();
        let shifted_line = AxisLine::new(line.point + shift, line.direction).unwrap();
        let m2 = Mobility::from_line(part, ty, &shifted_line, &moved).unwrap();
        let amounts = MoveAmounts::default();
        for i in 0..pts.len() {
            let a = move_vector(i, &cloud, &m, &amounts);
            let b = move_vector(i, &moved, &m2, &amounts);
            prop_assert!((a - b).norm() < 1e-9, "point {}: {:?} vs {:?}", i, a, b);
        }
    }
}

#[test]
fn ground_truth_flow_matches_analytic_motion() {
    let amounts = MoveAmounts::default();
    for archetype in Archetype::ALL {
        let gt = generate(archetype, 11, 1024).unwrap();
        let diag = gt.cloud.bbox_diagonal();
        // the flow of each mobility on its own, against the stored explicit line
        for part in gt.moving_parts() {
            for motion in &part.motions {
                let m = Mobility::from_line(part.indices.clone(), motion.motion_type, &motion.line, &gt.cloud)
                    .unwrap();
                let flow = mobility_to_flow(&gt.cloud, &[m], &amounts);
                for (i, v) in flow.vectors.iter().enumerate() {
                    let expected = if part.indices.binary_search(&i).is_ok() {
                        let p = gt.cloud.point(i);
                        transform_about_axis(&p, &motion.line, motion.motion_type, amounts.amount(diag)).unwrap() - p
                    } else {
                        Vec3::zeros()
                    };
                    assert!((v - expected).norm() < 1e-9, "{archetype} point {i}");
                }
            }
        }
    }
}
