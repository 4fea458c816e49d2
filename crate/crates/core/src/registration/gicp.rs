//! Plane-to-plane Generalized ICP with Levenberg damping.
//!
//! The cost at a pose `T` sums, over demo points `a`, the Mahalanobis
//! distance `dᵀ (C_b + R C_a Rᵀ)⁻¹ d` with `d = b − T a` and `b` the nearest
//! test point within the inlier radius. Covariances are scaled so their
//! largest eigenvalue is 1, which bounds a matched term by `r² / 2ε`; demo
//! points without a partner pay exactly that bound. Losing a correspondence
//! therefore never lowers the cost, and a step is kept only if the freshly
//! re-matched cost decreases, so the reported cost is monotone.

use nalgebra::{Matrix3, Matrix6, UnitQuaternion, Vector6};
use serde::{Deserialize, Serialize};

use super::covariance::{estimate_covariances, DEFAULT_NEIGHBORS, EPSILON_PLANE};
use super::visibility::{faces, upward_centroid, SensorView};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::se3::{Frame, PointCloud, Pose, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GicpParams {
    pub max_iterations: usize,
    /// Metres.
    pub inlier_radius: f64,
    /// Relative cost change below which the solver stops.
    pub tolerance: f64,
    pub damping: f64,
    pub neighbors: usize,
}

impl Default for GicpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            inlier_radius: 0.025,
            tolerance: 1e-6,
            damping: 1e-4,
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub delta: Pose,
    pub inlier_rmse: f64,
    pub fitness: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
}

const MAX_DAMPING_TRIES: usize = 12;

/// One demo/test pair at one inlier radius.
struct Problem<'a> {
    solver: &'a Gicp<'a>,
    radius_sq: f64,
    truncation: f64,
}

struct Pair {
    transformed: Vec3,
    residual: Vec3,
    weight: Matrix3<f64>,
}

impl Problem<'_> {
    fn weight(&self, rot: &Matrix3<f64>, a: usize, b: usize) -> Matrix3<f64> {
        let m = self.solver.test_cov[b] + rot * self.solver.demo_cov[a] * rot.transpose();
        // eigenvalues of m are at least 2ε, so the inverse always exists
        m.try_inverse().unwrap_or_else(|| Matrix3::identity() / (2.0 * EPSILON_PLANE))
    }

    /// Matched pairs and the cost at `pose`. Matched terms are capped at the
    /// truncation value, which is also what an unmatched point pays; with a
    /// known sensor, unmatched points that the other view could not have seen
    /// pay nothing.
    fn evaluate(&self, pose: &Pose) -> (Vec<Pair>, f64) {
        let rot = pose.rotation_matrix();
        let test = self.solver.test.points();
        let view = self.solver.view.as_ref();
        let mut cost = 0.0;
        let mut pairs = Vec::new();
        for (i, a) in self.solver.demo.points().iter().enumerate() {
            let p = pose.transform_point(a);
            match self.solver.tree.nearest(&p).filter(|n| n.dist_sq <= self.radius_sq) {
                Some(n) => {
                    let pair = Pair {
                        transformed: p,
                        residual: test[n.index] - p,
                        weight: self.weight(&rot, i, n.index),
                    };
                    cost += (pair.residual.transpose() * pair.weight * pair.residual)[0].min(self.truncation);
                    pairs.push(pair);
                }
                None => {
                    if view.is_none_or(|v| faces(&v.eye, &p, &(rot * v.demo_normals[i]))) {
                        cost += self.truncation;
                    }
                }
            }
        }
        if let Some(v) = view {
            let inv = pose.inverse();
            let inv_rot = rot.transpose();
            let radius = self.radius_sq.sqrt();
            for (b, n) in test.iter().zip(&v.test_normals) {
                let q = inv.transform_point(b);
                if v.demo_tree.nearest_within(&q, radius).is_none() && faces(&v.eye, &q, &(inv_rot * n)) {
                    cost += self.truncation;
                }
            }
        }
        (pairs, cost)
    }
}

/// Covariances and search structure for one demo/test pair, reusable across
/// initial guesses and radii.
pub struct Gicp<'a> {
    demo: &'a PointCloud,
    test: &'a PointCloud,
    demo_cov: Vec<Matrix3<f64>>,
    test_cov: Vec<Matrix3<f64>>,
    tree: KdTree,
    params: GicpParams,
    view: Option<SensorView>,
}

impl<'a> Gicp<'a> {
    pub fn new(demo_cloud: &'a PointCloud, test_cloud: &'a PointCloud, params: &GicpParams) -> Result<Self> {
        demo_cloud.ensure_non_empty()?;
        test_cloud.ensure_non_empty()?;
        demo_cloud.ensure_frame(Frame::Robot)?;
        test_cloud.ensure_frame(Frame::Robot)?;
        let k = params.neighbors.min(demo_cloud.len()).min(test_cloud.len()).max(1);
        Ok(Self {
            demo: demo_cloud,
            test: test_cloud,
            demo_cov: estimate_covariances(demo_cloud, k)?.normalized(),
            test_cov: estimate_covariances(test_cloud, k)?.normalized(),
            tree: KdTree::new(test_cloud.points()),
            params: params.clone(),
            view: None,
        })
    }

    /// Both clouds were taken by a sensor at `eye`: misses the other view
    /// could not have seen go unpenalised.
    pub fn with_viewpoint(mut self, eye: Vec3) -> Self {
        self.view = Some(SensorView::new(
            self.demo.points(),
            &self.demo_cov,
            self.test.points(),
            &self.test_cov,
            eye,
        ));
        self
    }

    /// Upward-facing centroids (demo, test); see [`upward_centroid`].
    pub fn upward_centroids(&self) -> Option<(Vec3, Vec3)> {
        self.view.as_ref().map(|v| {
            (
                upward_centroid(self.demo.points(), &v.demo_normals),
                upward_centroid(self.test.points(), &v.test_normals),
            )
        })
    }

    /// Cost at `pose` for the given inlier radius, without refining.
    pub fn cost_at(&self, pose: &Pose, radius: f64) -> f64 {
        self.problem(radius).evaluate(pose).1
    }

    fn problem(&self, radius: f64) -> Problem<'_> {
        Problem {
            solver: self,
            radius_sq: radius * radius,
            truncation: radius * radius / (2.0 * EPSILON_PLANE),
        }
    }

    /// Scaled covariances (largest eigenvalue 1) of the demo cloud.
    pub fn demo_covariances(&self) -> &[Matrix3<f64>] {
        &self.demo_cov
    }

    pub fn test_covariances(&self) -> &[Matrix3<f64>] {
        &self.test_cov
    }

    /// Refinement with the configured radius and iteration budget.
    pub fn refine(&self, init: &Pose) -> Result<RegistrationResult> {
        self.refine_with(init, self.params.inlier_radius, self.params.max_iterations)
    }

    pub fn refine_with(&self, init: &Pose, radius: f64, max_iterations: usize) -> Result<RegistrationResult> {
        let problem = self.problem(radius);
        let mut pose = *init;
        let (mut pairs, mut cost) = problem.evaluate(&pose);
        if pairs.is_empty() {
            return Err(Error::NoCorrespondences);
        }
        let initial_cost = cost;
        let mut lambda = self.params.damping;
        let mut iterations = 0;
        let mut converged = cost == 0.0;

        while !converged && iterations < max_iterations {
            iterations += 1;
            let (h, g) = normal_equations(&pairs);
            let mut accepted = None;
            for _ in 0..MAX_DAMPING_TRIES {
                let mut damped = h;
                for i in 0..6 {
                    damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
                }
                let Some(step) = damped.cholesky().map(|c| c.solve(&-g)) else {
                    lambda *= 10.0;
                    continue;
                };
                let candidate = apply_step(&step, &pose);
                let (candidate_pairs, candidate_cost) = problem.evaluate(&candidate);
                if candidate_cost < cost {
                    accepted = Some((candidate, candidate_pairs, candidate_cost));
                    lambda = (lambda * 0.1).max(1e-12);
                    break;
                }
                lambda *= 10.0;
            }
            let Some((next, next_pairs, next_cost)) = accepted else {
                // no damping level improves the cost: a local minimum
                converged = true;
                break;
            };
            let relative = (cost - next_cost) / cost.max(f64::MIN_POSITIVE);
            pose = next;
            pairs = next_pairs;
            cost = next_cost;
            converged = relative < self.params.tolerance || cost == 0.0;
        }

        let inlier_rmse = if pairs.is_empty() {
            0.0
        } else {
            (pairs.iter().map(|p| p.residual.norm_squared()).sum::<f64>() / pairs.len() as f64).sqrt()
        };
        Ok(RegistrationResult {
            delta: pose,
            inlier_rmse,
            fitness: fitness(self.demo, self.test, &pose, radius),
            iterations,
            converged,
            initial_cost,
            final_cost: cost,
        })
    }
}

/// Refines `init` so that `delta · demo ≈ test`.
pub fn generalized_icp(
    demo_cloud: &PointCloud,
    test_cloud: &PointCloud,
    init: &Pose,
    params: &GicpParams,
) -> Result<RegistrationResult> {
    Gicp::new(demo_cloud, test_cloud, params)?.refine(init)
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Gauss–Newton system for a left perturbation `(ω, v)`: the residual moves
/// by `[p]× ω − v`.
fn normal_equations(pairs: &[Pair]) -> (Matrix6<f64>, Vector6<f64>) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for p in pairs {
        let mut j = nalgebra::Matrix3x6::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&p.transformed));
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
        let jt_w = j.transpose() * p.weight;
        h += jt_w * j;
        g += jt_w * p.residual;
    }
    (h, g)
}

fn apply_step(step: &Vector6<f64>, pose: &Pose) -> Pose {
    let omega = Vec3::new(step[0], step[1], step[2]);
    let v = Vec3::new(step[3], step[4], step[5]);
    Pose::new(UnitQuaternion::from_scaled_axis(omega), v).compose(pose)
}

/// Fraction of test points with a transformed demo point within `radius`.
pub fn fitness(demo_cloud: &PointCloud, test_cloud: &PointCloud, delta: &Pose, radius: f64) -> f64 {
    if test_cloud.is_empty() || demo_cloud.is_empty() {
        return 0.0;
    }
    let moved: Vec<Vec3> = demo_cloud.points().iter().map(|p| delta.transform_point(p)).collect();
    let tree = KdTree::new(&moved);
    let hits = test_cloud
        .points()
        .iter()
        .filter(|q| tree.nearest_within(q, radius).is_some())
        .count();
    hits as f64 / test_cloud.len() as f64
}
