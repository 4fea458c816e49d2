use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{perturb_pose, PerturbationBounds};
use super::plan_linear_path;
use crate::error::Result;
use crate::rng::rng_for;
use crate::se3::{Pose, Vec3};
use crate::store::{Demonstration, DEFAULT_SPACING};

pub const DEFAULT_TRAJECTORY_COUNT: usize = 1000;

/// Box above the tabletop from which approach motions start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartCuboid {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for StartCuboid {
    /// 0.80 m along x and y, 0.30 m tall, starting 0.30 m above the table.
    fn default() -> Self {
        Self {
            min: Vec3::new(0.30, -0.40, 0.30),
            max: Vec3::new(1.10, 0.40, 0.60),
        }
    }
}

impl StartCuboid {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Uniform position, gripper pointing down with uniform yaw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Pose {
        let t = Vec3::from_fn(|i, _| rng.random_range(self.min[i]..=self.max[i]));
        let yaw = rng.random_range(-PI..=PI);
        let down = Pose::from_axis_angle(&Vec3::x(), PI, Vec3::zeros());
        Pose::from_translation(t).compose(&Pose::rz(yaw)).compose(&down)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTrajectory {
    pub start: Pose,
    pub path: Vec<Pose>,
    /// One perturbed copy of the target per waypoint.
    pub perturbed: Vec<Pose>,
}

pub fn simulate_one(target: &Pose, cuboid: &StartCuboid, seed: u64, index: u64) -> Result<AlignmentTrajectory> {
    let mut rng = rng_for(seed, index);
    let start = cuboid.sample(&mut rng);
    let path = plan_linear_path(&start, target, DEFAULT_SPACING)?;
    let perturbed = path
        .iter()
        .map(|_| perturb_pose(target, &PerturbationBounds::ALIGNMENT, &mut rng))
        .collect();
    Ok(AlignmentTrajectory { start, path, perturbed })
}

/// Straight approaches from random starts to the demonstration's alignment
/// target. Item `i` depends only on `(seed, i)`.
pub fn simulate_alignment_trajectories(
    demo: &Demonstration,
    count: usize,
    seed: u64,
) -> Result<Vec<AlignmentTrajectory>> {
    let target = demo.alignment_target();
    let cuboid = StartCuboid::default();
    (0..count as u64)
        .into_par_iter()
        .map(|i| simulate_one(&target, &cuboid, seed, i))
        .collect()
}
