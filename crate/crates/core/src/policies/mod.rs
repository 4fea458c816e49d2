//! The two phase policies: alignment by transferring the demonstration's first
//! end-effector pose through `T_δ`, then open-loop replay of the recorded
//! motion in the end-effector frame.

mod align_data;
mod augment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{interpolate, Pose, RelativeMotion};
use crate::store::{Demonstration, EndEffectorState, Gripper, DEFAULT_SPACING};

pub use align_data::{
    simulate_alignment_trajectories, simulate_one, AlignmentTrajectory, StartCuboid,
    DEFAULT_TRAJECTORY_COUNT,
};
pub use augment::{
    jitter_cloud, mask_augment, mask_partition, perturb_pose, MaskPartition, PerturbationBounds,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPlan {
    pub target: Pose,
    pub path: Vec<Pose>,
    pub source_demo: String,
    pub delta_used: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub motion: RelativeMotion,
    pub gripper: Gripper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayPlan {
    pub initial_gripper: Gripper,
    pub steps: Vec<ReplayStep>,
    pub source_demo: String,
}

/// `T_δ · T_WE^demo`: the demonstration's first pose carried into the test scene.
pub fn transfer_alignment_pose(demo: &Demonstration, delta: &Pose) -> Pose {
    delta.compose(&demo.alignment_target())
}

/// Straight-line path with translation steps of at most `spacing`; both
/// endpoints are returned exactly.
pub fn plan_linear_path(start: &Pose, target: &Pose, spacing: f64) -> Result<Vec<Pose>> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidSpacing(spacing));
    }
    if start == target {
        return Ok(vec![*start]);
    }
    let length = (target.translation() - start.translation()).norm();
    let steps = ((length / spacing) - 1e-9).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|i| interpolate(start, target, i as f64 / steps as f64))
        .collect()
}

pub fn plan_alignment(
    demo: &Demonstration,
    delta: &Pose,
    start: &Pose,
    spacing: f64,
) -> Result<AlignmentPlan> {
    let target = transfer_alignment_pose(demo, delta);
    Ok(AlignmentPlan {
        target,
        path: plan_linear_path(start, &target, spacing)?,
        source_demo: demo.id.clone(),
        delta_used: *delta,
    })
}

pub fn plan_alignment_default(demo: &Demonstration, delta: &Pose, start: &Pose) -> Result<AlignmentPlan> {
    plan_alignment(demo, delta, start, DEFAULT_SPACING)
}

pub fn build_replay_plan(demo: &Demonstration) -> Result<ReplayPlan> {
    let t = &demo.trajectory;
    if t.len() < 2 {
        return Err(Error::TrajectoryTooShort(t.len()));
    }
    Ok(ReplayPlan {
        initial_gripper: t[0].gripper,
        steps: t
            .windows(2)
            .map(|w| ReplayStep {
                motion: RelativeMotion::between(&w[0].pose, &w[1].pose),
                gripper: w[1].gripper,
            })
            .collect(),
        source_demo: demo.id.clone(),
    })
}

/// Open-loop: each recorded motion is applied in the current end-effector frame.
pub fn execute_replay(plan: &ReplayPlan, start: &Pose) -> Vec<EndEffectorState> {
    let mut out = Vec::with_capacity(plan.steps.len() + 1);
    out.push(EndEffectorState {
        pose: *start,
        gripper: plan.initial_gripper,
        time_index: 0,
    });
    let mut pose = *start;
    for (i, step) in plan.steps.iter().enumerate() {
        pose = step.motion.apply(&pose);
        out.push(EndEffectorState {
            pose,
            gripper: step.gripper,
            time_index: i as u64 + 1,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{pose_distance, PointCloud, Vec3};
    use crate::store::{Dataset, DemoInput};

    fn demo() -> Demonstration {
        let cloud = PointCloud::robot(
            (0..30).map(|i| Vec3::new(0.6 + 0.002 * i as f64, 0.0, 0.05)).collect(),
        )
        .unwrap();
        let first = Pose::from_axis_angle(&Vec3::new(1.0, 0.0, 0.0), std::f64::consts::PI, Vec3::new(0.62, 0.0, 0.2));
        let poses = [
            first,
            first.compose(&Pose::from_xyz(0.0, 0.0, 0.03)),
            first.compose(&Pose::from_axis_angle(&Vec3::z(), 0.4, Vec3::new(0.0, 0.01, 0.05))),
        ];
        let trajectory = poses
            .iter()
            .enumerate()
            .map(|(i, p)| EndEffectorState {
                pose: *p,
                gripper: if i == 2 { Gripper::Closed } else { Gripper::Open },
                time_index: i as u64,
            })
            .collect();
        Dataset::default()
            .prepare(DemoInput {
                id: "d".into(),
                description: "lift pan".into(),
                object_cloud: cloud,
                trajectory,
                object_instance_id: None,
                object_pose: None,
            })
            .unwrap()
    }

    fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
        let (dt, dr) = pose_distance(a, b);
        dt < tol && dr < tol
    }

    #[test]
    fn transfer_cases() {
        let d = demo();
        assert_eq!(transfer_alignment_pose(&d, &Pose::identity()), d.alignment_target());
        let moved = transfer_alignment_pose(&d, &Pose::from_xyz(0.1, 0.0, 0.0));
        let expected = d.alignment_target().to_homogeneous();
        let got = moved.to_homogeneous();
        assert!((got.fixed_view::<3, 3>(0, 0) - expected.fixed_view::<3, 3>(0, 0)).norm() < 1e-12);
        assert!((got[(0, 3)] - expected[(0, 3)] - 0.1).abs() < 1e-12);

        let object = Pose::from_xyz(0.6, 0.05, 0.0);
        let delta = Pose::rz(std::f64::consts::FRAC_PI_2);
        let test_ee = transfer_alignment_pose(&d, &delta);
        let before = d.alignment_target().inverse().compose(&object);
        let after = test_ee.inverse().compose(&delta.compose(&object));
        assert!(close(&before, &after, 1e-12));
    }

    #[test]
    fn linear_path_cases() {
        let a = Pose::from_xyz(0.5, 0.0, 0.3);
        assert_eq!(plan_linear_path(&a, &a, 0.01).unwrap(), vec![a]);
        let b = Pose::from_xyz(0.6, 0.0, 0.3);
        let p = plan_linear_path(&a, &b, 0.01).unwrap();
        assert_eq!(p.len(), 11);
        assert_eq!(*p.last().unwrap(), b);
        let r = Pose::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2, *a.translation());
        let p = plan_linear_path(&a, &r, 0.01).unwrap();
        assert!(p.len() >= 2);
        assert_eq!(p[0], a);
        assert_eq!(*p.last().unwrap(), r);
        assert!(p.iter().all(|q| q.translation() == a.translation()));
        assert!(matches!(plan_linear_path(&a, &b, 0.0), Err(Error::InvalidSpacing(_))));
    }

    #[test]
    fn replay_round_trip_and_equivariance() {
        let d = demo();
        let plan = build_replay_plan(&d).unwrap();
        assert_eq!(plan.steps.len(), d.trajectory.len() - 1);
        let out = execute_replay(&plan, &d.alignment_target());
        for (o, s) in out.iter().zip(&d.trajectory) {
            assert!(close(&o.pose, &s.pose, 1e-9));
            assert_eq!(o.gripper, s.gripper);
        }
        let g = Pose::from_axis_angle(&Vec3::new(0.2, 0.1, 1.0), 0.7, Vec3::new(0.1, -0.2, 0.0));
        let moved = execute_replay(&plan, &g.compose(&d.alignment_target()));
        for (o, s) in moved.iter().zip(&d.trajectory) {
            assert!(close(&o.pose, &g.compose(&s.pose), 1e-9));
        }
    }

    #[test]
    fn two_pose_demo_step_is_local_offset() {
        let mut d = demo();
        d.trajectory.truncate(2);
        let plan = build_replay_plan(&d).unwrap();
        assert!(close(&plan.steps[0].motion.delta, &Pose::from_xyz(0.0, 0.0, 0.01), 1e-12));
        let empty = ReplayPlan { initial_gripper: Gripper::Open, steps: vec![], source_demo: "x".into() };
        assert_eq!(execute_replay(&empty, &Pose::identity()).len(), 1);
    }
}
