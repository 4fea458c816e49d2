//! Relative object pose between a demonstration and a test scene: the best
//! few yaw-sweep guesses are each refined by Generalized ICP, first with a
//! wide inlier radius and then the nominal one, and the lowest final cost
//! wins. Partial views of near-symmetric objects otherwise lock onto the
//! wrong basin of the sweep.

mod coarse;
mod covariance;
mod gicp;
mod visibility;

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::se3::{pose_distance, PointCloud, Pose, Vec3};
use crate::store::Demonstration;

pub use coarse::{coarse_align, coarse_align_with, yaw_hypotheses, yaw_seeds, CoarseParams};
pub use covariance::{estimate_covariances, LocalCovariances, DEFAULT_NEIGHBORS, EPSILON_PLANE};
pub use gicp::{fitness, generalized_icp, Gicp, GicpParams, RegistrationResult};
pub use visibility::{faces, oriented_normals, upward_centroid, FACING_COS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationParams {
    pub coarse: CoarseParams,
    pub gicp: GicpParams,
    /// Yaw basins refined in full (no viewpoint).
    pub hypotheses: usize,
    /// Yaw basins refined in full when the viewpoint is known; partial views
    /// have many more plausible basins.
    pub view_hypotheses: usize,
    /// Inlier radius of the first refinement stage; 0 skips the stage.
    pub wide_radius: f64,
    /// Sensor position shared by both clouds. When known, misses the other
    /// view could not have seen are not penalised, and every yaw seed is
    /// tried instead of the coarse sweep's best few.
    pub viewpoint: Option<Vec3>,
    /// Wide-radius iterations spent on each yaw seed before ranking
    /// (viewpoint known only).
    pub sweep_iterations: usize,
    /// Best swept basins re-seeded at `±offset_step` along x and y
    /// (viewpoint known only); 0 disables.
    pub offset_basins: usize,
    /// Metres.
    pub offset_step: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            coarse: CoarseParams::default(),
            gicp: GicpParams::default(),
            hypotheses: 3,
            view_hypotheses: 20,
            wide_radius: 0.05,
            viewpoint: None,
            sweep_iterations: 8,
            offset_basins: 10,
            offset_step: 0.02,
        }
    }
}

pub fn register_clouds(
    demo_cloud: &PointCloud,
    test_cloud: &PointCloud,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    let solver = Gicp::new(demo_cloud, test_cloud, &params.gicp)?;
    match params.viewpoint {
        Some(eye) => register_from_view(&solver.with_viewpoint(eye), params),
        None => register_by_cost(&solver, demo_cloud, test_cloud, params),
    }
}

fn wide_then_nominal(solver: &Gicp, init: &Pose, params: &RegistrationParams) -> Result<RegistrationResult> {
    let start = if params.wide_radius > params.gicp.inlier_radius {
        solver
            .refine_with(init, params.wide_radius, params.gicp.max_iterations)
            .map_or(*init, |r| r.delta)
    } else {
        *init
    };
    solver.refine(&start)
}

/// Keeps the lowest final cost; on equal cost the earlier, better-scored
/// guess stays.
fn register_by_cost(
    solver: &Gicp,
    demo_cloud: &PointCloud,
    test_cloud: &PointCloud,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    let guesses = yaw_hypotheses(demo_cloud, test_cloud, &params.coarse, params.hypotheses)?;
    let mut best: Option<RegistrationResult> = None;
    let mut last_err = None;
    for (_, init) in guesses {
        match wide_then_nominal(solver, &init, params) {
            Ok(r) if best.as_ref().is_none_or(|b| r.final_cost < b.final_cost) => best = Some(r),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::NoCorrespondences))
}

fn sweep(solver: &Gicp, seeds: &[Pose], params: &RegistrationParams) -> Vec<(f64, Pose)> {
    let mut swept: Vec<(f64, usize, Pose)> = seeds
        .par_iter()
        .enumerate()
        .filter_map(|(i, seed)| {
            let r = solver.refine_with(seed, params.wide_radius, params.sweep_iterations).ok()?;
            Some((r.final_cost, i, r.delta))
        })
        .collect();
    swept.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    swept.into_iter().map(|(c, _, p)| (c, p)).collect()
}

/// The first `n` poses of a cost-sorted list that lie in distinct basins.
fn distinct(sorted: &[(f64, Pose)], n: usize) -> Vec<Pose> {
    let mut kept: Vec<Pose> = Vec::new();
    for (_, pose) in sorted {
        if kept.len() == n {
            break;
        }
        if kept.iter().all(|k| {
            let (dt, dr) = pose_distance(k, pose);
            dt > 0.005 || dr > 5f64.to_radians()
        }) {
            kept.push(*pose);
        }
    }
    kept
}

/// Every yaw seed about the upward-facing centroids is briefly refined at
/// the wide radius under the sensor-aware cost. The cheapest distinct basins,
/// plus shifted copies of the best, are refined in full and the lowest final
/// cost wins.
fn register_from_view(solver: &Gicp, params: &RegistrationParams) -> Result<RegistrationResult> {
    let (demo_anchor, test_anchor) = solver.upward_centroids().expect("viewpoint set by the caller");
    let seeds = yaw_seeds(&demo_anchor, &test_anchor, &params.coarse);
    let mut swept = sweep(solver, &seeds, params);
    if swept.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    // the anchors of two instances need not coincide: re-seed the best
    // basins shifted along the table axes
    let d = params.offset_step;
    if params.offset_basins > 0 && d > 0.0 {
        let shifts = [Vec3::new(d, 0.0, 0.0), Vec3::new(-d, 0.0, 0.0), Vec3::new(0.0, d, 0.0), Vec3::new(0.0, -d, 0.0)];
        let shifted: Vec<Pose> = distinct(&swept, params.offset_basins)
            .iter()
            .flat_map(|p| shifts.iter().map(move |s| Pose::from_translation(*s).compose(p)))
            .collect();
        swept.extend(sweep(solver, &shifted, params));
        swept.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let kept = distinct(&swept, params.view_hypotheses.max(1));
    let mut best: Option<RegistrationResult> = None;
    let mut last_err = None;
    for init in kept {
        match solver.refine(&init) {
            Ok(r) if best.as_ref().is_none_or(|b| r.final_cost < b.final_cost) => best = Some(r),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::NoCorrespondences))
}

/// `T_δ` taking the demonstration object to the test object.
pub fn estimate_delta(demo: &Demonstration, test_cloud: &PointCloud) -> Result<RegistrationResult> {
    estimate_delta_with(demo, test_cloud, &RegistrationParams::default())
}

pub fn estimate_delta_with(
    demo: &Demonstration,
    test_cloud: &PointCloud,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    register_clouds(&demo.object_cloud, test_cloud, params)
}
