use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::objects::Symmetry;
use super::render::{default_camera, RenderSpec};
use super::scene::{SceneSpec, TaskSpec};
use crate::error::{Error, Result};
use crate::policies::{build_replay_plan, execute_replay, plan_linear_path, transfer_alignment_pose};
use crate::registration::{estimate_delta_with, RegistrationParams, RegistrationResult};
use crate::retrieval::{hierarchical_retrieve, RetrievalResult};
use crate::se3::{pose_distance, Pose, Vec3};
use crate::store::{Dataset, Demonstration, EndEffectorState, Gripper, DEFAULT_SPACING};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    None,
    /// Kept for the taxonomy; simulated clouds are segmented by construction.
    Segmentation,
    Retrieval,
    Registration,
    Execution,
}

impl FailureClass {
    pub const ALL: [FailureClass; 5] = [
        FailureClass::None,
        FailureClass::Segmentation,
        FailureClass::Retrieval,
        FailureClass::Registration,
        FailureClass::Execution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureClass::None => "none",
            FailureClass::Segmentation => "segmentation",
            FailureClass::Retrieval => "retrieval",
            FailureClass::Registration => "registration",
            FailureClass::Execution => "execution",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutOptions {
    /// Replace the estimated `T_δ` with the ground truth (upper bound runs).
    pub use_gt_delta: bool,
    pub registration: RegistrationParams,
    pub render: RenderSpec,
    /// Where the arm starts before the alignment motion.
    pub home: Pose,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            use_gt_delta: false,
            // the head camera is calibrated, so its position is known
            registration: RegistrationParams {
                viewpoint: Some(*default_camera().translation()),
                ..RegistrationParams::default()
            },
            render: RenderSpec::default(),
            home: Pose::from_axis_angle(&Vec3::x(), PI, Vec3::new(0.45, 0.0, 0.45)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub scene: SceneSpec,
    pub task: TaskSpec,
    pub retrieval: Option<RetrievalResult>,
    pub registration: Option<RegistrationResult>,
    pub gt_delta: Option<Pose>,
    pub delta_used: Option<Pose>,
    pub executed: Vec<EndEffectorState>,
    /// Final end-effector error in the task frame: metres, radians.
    pub task_error: Option<(f64, f64)>,
    /// Symmetry-aware `T_δ` error at the demonstration object: metres, radians.
    pub delta_error: Option<(f64, f64)>,
    pub success: bool,
    pub failure_class: FailureClass,
    /// Pipeline error that ended the rollout early.
    pub error: Option<String>,
}

/// Symmetry elements as yaw angles; `None` for a continuous group.
fn discrete_yaws(symmetry: Symmetry) -> Option<Vec<f64>> {
    match symmetry {
        Symmetry::None => Some(vec![0.0]),
        Symmetry::Discrete(n) => Some((0..n.max(1)).map(|k| TAU * k as f64 / n.max(1) as f64).collect()),
        Symmetry::Continuous => None,
    }
}

/// Yaw of the symmetry element minimizing `score`.
fn argmin_over_symmetry(symmetry: Symmetry, score: impl Fn(f64) -> f64) -> f64 {
    let pick = |cands: &mut dyn Iterator<Item = f64>| {
        cands.fold((0.0, f64::INFINITY), |best, y| {
            let s = score(y);
            if s < best.1 { (y, s) } else { best }
        })
    };
    if let Some(yaws) = discrete_yaws(symmetry) {
        return pick(&mut yaws.into_iter()).0;
    }
    // grid search, then golden-section refinement inside the best cell
    let n = 720;
    let step = TAU / n as f64;
    let (grid_best, grid_score) = pick(&mut (0..n).map(|k| k as f64 * step));
    let (mut a, mut b) = (grid_best - step, grid_best + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if score(c) < score(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let refined = 0.5 * (a + b);
    if score(refined) < grid_score { refined } else { grid_best }
}

/// Error pair at the symmetry element minimizing `max(dt / tol_t, dr / tol_r)`.
fn symmetric_pose_error(
    symmetry: Symmetry,
    tol: (f64, f64),
    error_at: impl Fn(f64) -> (f64, f64),
) -> (f64, f64) {
    let norm = |e: (f64, f64)| (e.0 / tol.0).max(e.1 / tol.1);
    error_at(argmin_over_symmetry(symmetry, |y| norm(error_at(y))))
}

/// Error of a registration estimate against the ground truth, measured at
/// the demonstration object and minimized over the object's symmetries.
pub fn delta_error(delta: &Pose, demo_object: &Pose, test_object: &Pose, symmetry: Symmetry) -> (f64, f64) {
    // identity when delta maps the demo object exactly onto the test object
    let x = test_object.inverse().compose(delta).compose(demo_object);
    let dt = x.translation().norm();
    let q = x.rotation().quaternion();
    let dr = match symmetry {
        Symmetry::Continuous => {
            // drop the twist about z; what remains is the tilt
            2.0 * q.i.hypot(q.j).atan2(q.w.hypot(q.k))
        }
        _ => discrete_yaws(symmetry)
            .unwrap()
            .into_iter()
            .map(|y| pose_distance(&x, &Pose::rz(y)).1)
            .fold(f64::INFINITY, f64::min),
    };
    (dt, dr)
}

/// Ground-truth context of a stored demonstration.
#[derive(Clone, Debug)]
pub struct DemoTruth {
    pub object_pose: Pose,
}

pub fn demo_truth(demo: &Demonstration) -> Result<DemoTruth> {
    let object_pose = demo
        .object_pose
        .ok_or_else(|| Error::Config(format!("demo {} has no ground-truth object pose", demo.id)))?;
    Ok(DemoTruth { object_pose })
}

/// Error of the final end-effector pose in the test object frame against the
/// demonstrated final pose in the demo object frame, minimized over the test
/// object's symmetries.
fn final_pose_error(task: &TaskSpec, scene: &SceneSpec, truth: &DemoTruth, demo_last: &Pose, final_pose: &Pose) -> (f64, f64) {
    let expected = truth.object_pose.inverse().compose(demo_last);
    symmetric_pose_error(scene.object.symmetry, (task.threshold_translation, task.threshold_rotation), |yaw| {
        let frame = scene.object_pose.compose(&Pose::rz(yaw));
        pose_distance(&frame.inverse().compose(final_pose), &expected)
    })
}

/// Final end-effector error when `demo` is transferred with `delta` into
/// `scene` and replayed.
pub fn transfer_error(task: &TaskSpec, scene: &SceneSpec, demo: &Demonstration, truth: &DemoTruth, delta: &Pose) -> (f64, f64) {
    let demo_last = demo.trajectory.last().expect("validated demo").pose;
    // replay is a rigid left-multiplication of the recorded trajectory
    final_pose_error(task, scene, truth, &demo_last, &delta.compose(&demo_last))
}

fn within(task: &TaskSpec, e: (f64, f64)) -> bool {
    e.0 <= task.threshold_translation && e.1 <= task.threshold_rotation
}

/// Oracle check: would `demo` succeed under its ground-truth `T_δ`?
pub fn succeeds_under_gt(task: &TaskSpec, scene: &SceneSpec, demo: &Demonstration) -> Result<bool> {
    let truth = demo_truth(demo)?;
    let gt = scene.object_pose.compose(&truth.object_pose.inverse());
    Ok(within(task, transfer_error(task, scene, demo, &truth, &gt)))
}

/// Taxonomy of a finished rollout, in precedence order retrieval,
/// registration, execution.
pub fn classify_failure(dataset: &Dataset, result: &RolloutResult) -> Result<FailureClass> {
    if result.success {
        return Ok(FailureClass::None);
    }
    let Some(retrieval) = &result.retrieval else {
        return Ok(FailureClass::Retrieval);
    };
    let retrieved = dataset
        .get(&retrieval.demo_id)
        .ok_or_else(|| Error::UnknownDemo(retrieval.demo_id.clone()))?;
    if !succeeds_under_gt(&result.task, &result.scene, retrieved)? {
        let skill = &retrieved.micro_skill;
        for id in dataset.ids_for_skill(skill).into_iter().flatten() {
            if id != &retrieved.id && succeeds_under_gt(&result.task, &result.scene, dataset.get(id).expect("indexed id"))? {
                return Ok(FailureClass::Retrieval);
            }
        }
    }
    match result.delta_error {
        Some(e) if within(&result.task, e) => Ok(FailureClass::Execution),
        _ => Ok(FailureClass::Registration),
    }
}

/// Renders the scene, retrieves, registers, transfers, replays and scores.
pub fn run_rollout(dataset: &Dataset, task: &TaskSpec, scene: &SceneSpec, options: &RolloutOptions) -> Result<RolloutResult> {
    task.validate()?;
    let mut result = RolloutResult {
        scene: scene.clone(),
        task: task.clone(),
        retrieval: None,
        registration: None,
        gt_delta: None,
        delta_used: None,
        executed: Vec::new(),
        task_error: None,
        delta_error: None,
        success: false,
        failure_class: FailureClass::Retrieval,
        error: None,
    };
    let cloud = match scene.observe(&options.render) {
        Ok(c) => c,
        Err(e) => {
            result.error = Some(e.to_string());
            return Ok(result);
        }
    };
    let description = task.describe(scene.rng_seed);
    let retrieval = match hierarchical_retrieve(dataset, &description, &cloud) {
        Ok(r) => r,
        Err(e) if e.is_retrieval_domain() || matches!(e, Error::EmptyDataset) => {
            result.error = Some(e.to_string());
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    let demo = dataset.get(&retrieval.demo_id).expect("retrieved id");
    result.retrieval = Some(retrieval);
    let truth = demo_truth(demo)?;
    let gt_delta = scene.object_pose.compose(&truth.object_pose.inverse());
    result.gt_delta = Some(gt_delta);

    let delta = if options.use_gt_delta {
        gt_delta
    } else {
        match estimate_delta_with(demo, &cloud, &options.registration) {
            Ok(r) => {
                let d = r.delta;
                result.registration = Some(r);
                d
            }
            Err(e) => {
                result.error = Some(e.to_string());
                result.failure_class = classify_failure(dataset, &result)?;
                return Ok(result);
            }
        }
    };
    result.delta_used = Some(delta);
    result.delta_error = Some(delta_error(&delta, &truth.object_pose, &scene.object_pose, scene.object.symmetry));

    let target = transfer_alignment_pose(demo, &delta);
    let approach = plan_linear_path(&options.home, &target, DEFAULT_SPACING)?;
    let replay = execute_replay(&build_replay_plan(demo)?, &target);
    let mut executed: Vec<EndEffectorState> = approach[..approach.len() - 1]
        .iter()
        .map(|p| EndEffectorState { pose: *p, gripper: replay[0].gripper, time_index: 0 })
        .collect();
    executed.extend(replay);
    for (i, s) in executed.iter_mut().enumerate() {
        s.time_index = i as u64;
    }
    let final_pose = executed.last().expect("non-empty").pose;

    let err = final_pose_error(task, scene, &truth, &demo.trajectory.last().expect("validated demo").pose, &final_pose);
    result.task_error = Some(err);
    result.success = within(task, err);
    result.executed = executed;
    result.failure_class = classify_failure(dataset, &result)?;
    Ok(result)
}

/// Gripper commands of an executed trajectory, for schedule comparisons.
pub fn gripper_schedule(states: &[EndEffectorState]) -> Vec<Gripper> {
    states.iter().map(|s| s.gripper).collect()
}
