use std::f64::consts::PI;

use mt3_core::policies::{
    build_replay_plan, execute_replay, jitter_cloud, mask_partition, perturb_pose, plan_linear_path,
    simulate_alignment_trajectories, simulate_one, transfer_alignment_pose, PerturbationBounds, StartCuboid,
};
use mt3_core::rng::rng;
use mt3_core::se3::pose_distance;
use mt3_core::sim::gripper_schedule;
use mt3_core::{Dataset, DemoInput, Demonstration, EndEffectorState, Gripper, PointCloud, Pose, Vec3};
use nalgebra::Matrix4;
use proptest::prelude::*;
use rand::Rng;

fn matrix(p: &Pose) -> Matrix4<f64> {
    let [tx, ty, tz, w, x, y, z] = p.to_array();
    Matrix4::new(
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y), tx,
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x), ty,
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y), tz,
        0.0, 0.0, 0.0, 1.0,
    )
}

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-1.0f64..1.0), -PI..PI, prop::array::uniform3(-1.0f64..1.0))
        .prop_filter("axis", |(a, _, _)| Vec3::from(*a).norm() > 1e-3)
        .prop_map(|(a, angle, t)| Pose::from_axis_angle(&Vec3::from(a), angle, Vec3::from(t)))
}

fn demo_from(first: Pose, steps: &[(Pose, bool)]) -> Demonstration {
    let mut trajectory = vec![EndEffectorState { pose: first, gripper: Gripper::Open, time_index: 0 }];
    for (i, (step, closed)) in steps.iter().enumerate() {
        let prev = trajectory.last().unwrap().pose;
        trajectory.push(EndEffectorState {
            pose: prev.compose(step),
            gripper: if *closed { Gripper::Closed } else { Gripper::Open },
            time_index: i as u64 + 1,
        });
    }
    let centre = Vec3::new(0.6, 0.0, 0.05);
    let cloud = PointCloud::robot((0..30).map(|i| centre + Vec3::new(0.002 * i as f64, 0.0, 0.0)).collect()).unwrap();
    let mut ds = Dataset::default();
    ds.ingest(DemoInput {
        id: "d".into(),
        description: "open box".into(),
        object_cloud: cloud,
        trajectory,
        object_instance_id: None,
        object_pose: None,
    })
    .unwrap()
    .clone()
}

fn small_step() -> impl Strategy<Value = (Pose, bool)> {
    (prop::array::uniform3(-0.03f64..0.03), -0.3f64..0.3, any::<bool>())
        .prop_map(|(t, yaw, g)| (Pose::from_axis_angle(&Vec3::new(0.2, -0.1, 1.0), yaw, Vec3::from(t)), g))
}

fn same(a: &Pose, b: &Pose, tol: f64) -> bool {
    let (dt, dr) = pose_distance(a, b);
    dt < tol && dr < tol
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    /// `(T_WE^test)^-1 · (G · T_obj)` equals `(T_WE^demo)^-1 · T_obj` when `T_δ = G`.
    #[test]
    fn transfer_preserves_relative_pose(first in pose(), object in pose(), g in pose()) {
        let demo = demo_from(first, &[(Pose::from_xyz(0.0, 0.0, -0.02), true)]);
        let test = transfer_alignment_pose(&demo, &g);
        let lhs = matrix(&test).try_inverse().unwrap() * (matrix(&g) * matrix(&object));
        let rhs = matrix(&first).try_inverse().unwrap() * matrix(&object);
        prop_assert!((lhs - rhs).abs().max() < 1e-9);
        prop_assert!((matrix(&test) - matrix(&g) * matrix(&first)).abs().max() < 1e-9);
    }

    #[test]
    fn replay_is_left_equivariant(first in pose(), g in pose(), steps in prop::collection::vec(small_step(), 1..6)) {
        let demo = demo_from(first, &steps);
        let plan = build_replay_plan(&demo).unwrap();
        prop_assert_eq!(plan.steps.len(), demo.trajectory.len() - 1);
        let out = execute_replay(&plan, &g.compose(&first));
        prop_assert_eq!(out.len(), demo.trajectory.len());
        for (o, d) in out.iter().zip(&demo.trajectory) {
            let want = matrix(&g) * matrix(&d.pose);
            prop_assert!((matrix(&o.pose) - want).abs().max() < 1e-9);
        }
        prop_assert_eq!(gripper_schedule(&out), gripper_schedule(&demo.trajectory));
        for (w, s) in out.windows(2).zip(&plan.steps) {
            prop_assert!(same(&w[0].pose.inverse().compose(&w[1].pose), &s.motion.delta, 1e-12));
        }
    }

    #[test]
    fn replay_from_own_start_reproduces_demo(first in pose(), steps in prop::collection::vec(small_step(), 1..6)) {
        let demo = demo_from(first, &steps);
        let out = execute_replay(&build_replay_plan(&demo).unwrap(), &first);
        for (o, d) in out.iter().zip(&demo.trajectory) {
            prop_assert!(same(&o.pose, &d.pose, 1e-9));
            prop_assert_eq!(o.gripper, d.gripper);
        }
    }

    #[test]
    fn linear_paths(a in pose(), b in pose(), spacing in 0.002f64..0.1) {
        let path = plan_linear_path(&a, &b, spacing).unwrap();
        prop_assert_eq!(path[0], a);
        prop_assert_eq!(*path.last().unwrap(), b);
        for w in path.windows(2) {
            prop_assert!((w[1].translation() - w[0].translation()).norm() <= spacing + 1e-12);
        }
    }
}

#[test]
fn ten_centimetres_give_eleven_poses() {
    let p = plan_linear_path(&Pose::identity(), &Pose::from_xyz(0.1, 0.0, 0.0), 0.01).unwrap();
    assert_eq!(p.len(), 11);
    assert_eq!(plan_linear_path(&Pose::identity(), &Pose::identity(), 0.01).unwrap(), vec![Pose::identity()]);
    let turn = plan_linear_path(&Pose::identity(), &Pose::rz(PI / 2.0), 0.01).unwrap();
    assert!(turn.len() >= 2);
    assert!(turn.iter().all(|p| p.translation().norm() == 0.0));
}

#[test]
fn generator_fidelity() {
    let demo = demo_from(
        Pose::from_axis_angle(&Vec3::x(), PI, Vec3::new(0.6, 0.05, 0.12)),
        &[(Pose::from_xyz(0.0, 0.0, 0.03), true)],
    );
    let target = demo.alignment_target();
    let set = simulate_alignment_trajectories(&demo, 1000, 17).unwrap();
    assert_eq!(set.len(), 1000);
    let cuboid = StartCuboid::default();
    for (i, t) in set.iter().enumerate() {
        assert!(cuboid.contains(t.start.translation()));
        assert_eq!(t.path[0], t.start);
        assert_eq!(*t.path.last().unwrap(), target);
        for w in t.path.windows(2) {
            assert!((w[1].translation() - w[0].translation()).norm() <= 0.01 + 1e-12);
        }
        assert_eq!(t.perturbed.len(), t.path.len());
        assert!(t.perturbed.iter().all(|p| PerturbationBounds::ALIGNMENT.contains(&target, p)));
        if i % 97 == 0 {
            assert_eq!(&simulate_one(&target, &cuboid, 17, i as u64).unwrap(), t);
        }
    }
    let extent = cuboid.max - cuboid.min;
    let mut sorted: Vec<f64> = [0.80, 0.80, 0.30].to_vec();
    let mut got: Vec<f64> = extent.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    got.sort_by(f64::total_cmp);
    assert!(sorted.iter().zip(&got).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn interaction_bounds_are_honoured() {
    let mut r = rng(5);
    let base = Pose::from_xyz(0.5, 0.1, 0.2);
    for _ in 0..2000 {
        let p = perturb_pose(&base, &PerturbationBounds::INTERACTION, &mut r);
        let (dt, dr) = pose_distance(&base, &p);
        assert!(dt <= 0.009 + 1e-12 && dr <= 5f64.to_radians() + 1e-12);
    }
}

fn uniform_square(n: usize, seed: u64) -> PointCloud {
    let mut r = rng(seed);
    PointCloud::robot((0..n).map(|_| Vec3::new(r.random_range(0.0..0.2), r.random_range(0.0..0.2), 0.0)).collect()).unwrap()
}

#[test]
fn ten_clusters_four_masked() {
    let cloud = uniform_square(3000, 1);
    let mut fractions = Vec::new();
    for seed in 0..100 {
        let m = mask_partition(&cloud, 10, 4, seed).unwrap();
        assert_eq!(m.seeds.len(), 10);
        assert_eq!(m.masked.len(), 4);
        assert_eq!(m.kept.len() + m.dropped.len(), cloud.len());
        let mut all: Vec<[u64; 3]> = m.kept.points().iter().chain(m.dropped.points()).map(|p| p.map(f64::to_bits).into()).collect();
        let mut orig: Vec<[u64; 3]> = cloud.points().iter().map(|p| p.map(f64::to_bits).into()).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        // each point sits with its nearest seed
        for (i, p) in cloud.points().iter().enumerate() {
            let d = (p - cloud.points()[m.seeds[m.labels[i]]]).norm();
            assert!(m.seeds.iter().all(|&s| (p - cloud.points()[s]).norm() >= d - 1e-15));
        }
        let mut kept: Vec<usize> = m.labels.iter().copied().filter(|l| !m.masked.contains(l)).collect();
        kept.sort_unstable();
        kept.dedup();
        assert_eq!(kept.len(), 6);
        fractions.push(m.kept.len() as f64 / cloud.len() as f64);
    }
    assert!(fractions.iter().all(|f| (0.4..=0.8).contains(f)), "{fractions:?}");
}

#[test]
fn jitter_has_the_requested_spread() {
    let cloud = PointCloud::robot(vec![Vec3::new(0.5, 0.0, 0.1); 20_000]).unwrap();
    let noisy = jitter_cloud(&cloud, 0.002, 11).unwrap();
    for axis in 0..3 {
        let v: Vec<f64> = noisy.points().iter().zip(cloud.points()).map(|(a, b)| a[axis] - b[axis]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((sd - 0.002).abs() < 0.0002, "axis {axis}: {sd}");
    }
}
