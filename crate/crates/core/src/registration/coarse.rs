use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kdtree::KdTree;
use crate::se3::{Frame, PointCloud, Pose, Vec3};

/// Demo points scored per yaw candidate; larger clouds are strided down.
const MAX_SCORED_POINTS: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoarseParams {
    /// Yaw candidates over a full turn; 72 gives 5 degree steps.
    pub yaw_steps: usize,
}

impl Default for CoarseParams {
    fn default() -> Self {
        Self { yaw_steps: 72 }
    }
}

/// Centroid alignment plus the best yaw about the vertical axis through the
/// test centroid.
pub fn coarse_align(demo_cloud: &PointCloud, test_cloud: &PointCloud) -> Result<Pose> {
    coarse_align_with(demo_cloud, test_cloud, &CoarseParams::default())
}

pub fn coarse_align_with(
    demo_cloud: &PointCloud,
    test_cloud: &PointCloud,
    params: &CoarseParams,
) -> Result<Pose> {
    let ranked = yaw_hypotheses(demo_cloud, test_cloud, params, 1)?;
    Ok(ranked[0].1)
}

/// `demo_anchor` moved onto `test_anchor` and turned by each yaw step about
/// it, in step order.
pub fn yaw_seeds(demo_anchor: &Vec3, test_anchor: &Vec3, params: &CoarseParams) -> Vec<Pose> {
    let steps = params.yaw_steps.max(1);
    (0..steps)
        .map(|k| {
            Pose::from_translation(*test_anchor)
                .compose(&Pose::rz(TAU * k as f64 / steps as f64))
                .compose(&Pose::from_translation(-demo_anchor))
        })
        .collect()
}

/// Up to `count` initial guesses, one per local minimum of the yaw score
/// curve, best first as `(rmse, pose)`. Equal scores keep the smaller |yaw|.
pub fn yaw_hypotheses(
    demo_cloud: &PointCloud,
    test_cloud: &PointCloud,
    params: &CoarseParams,
    count: usize,
) -> Result<Vec<(f64, Pose)>> {
    let c_demo = demo_cloud.centroid()?;
    let c_test = test_cloud.centroid()?;
    demo_cloud.ensure_frame(Frame::Robot)?;
    test_cloud.ensure_frame(Frame::Robot)?;
    let tree = KdTree::new(test_cloud.points());
    let stride = demo_cloud.len().div_ceil(MAX_SCORED_POINTS);
    let centred: Vec<Vec3> = demo_cloud
        .points()
        .iter()
        .step_by(stride)
        .map(|p| p - c_demo)
        .collect();

    let steps = params.yaw_steps.max(1);
    let yaw_of = |k: usize| {
        let yaw = TAU * k as f64 / steps as f64;
        if yaw > std::f64::consts::PI {
            yaw - TAU
        } else {
            yaw
        }
    };
    let scores: Vec<f64> = (0..steps)
        .map(|k| {
            let rot = Pose::rz(yaw_of(k));
            let sum: f64 = centred
                .iter()
                .map(|p| {
                    let q = rot.transform_point(p) + c_test;
                    tree.nearest(&q).map_or(0.0, |n| n.dist_sq)
                })
                .sum();
            (sum / centred.len() as f64).sqrt()
        })
        .collect();

    let near = |a: f64, b: f64| a <= b + 1e-12;
    let mut minima: Vec<usize> = (0..steps)
        .filter(|&k| near(scores[k], scores[(k + steps - 1) % steps]) && near(scores[k], scores[(k + 1) % steps]))
        .collect();
    // scores within rounding noise count as equal, so exact symmetries
    // resolve to the smallest |yaw|
    minima.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a], scores[b]);
        if (sa - sb).abs() <= 1e-12 {
            yaw_of(a).abs().total_cmp(&yaw_of(b).abs()).then(a.cmp(&b))
        } else {
            sa.total_cmp(&sb)
        }
    });
    // plateaus yield runs of equal minima; keep one per basin
    let mut chosen: Vec<usize> = Vec::new();
    for k in minima {
        let apart = |j: usize| {
            let d = k.abs_diff(j);
            d.min(steps - d) > 2
        };
        if chosen.iter().all(|&j| apart(j)) {
            chosen.push(k);
        }
    }
    if chosen.is_empty() {
        chosen.push(0);
    }
    Ok(chosen
        .into_iter()
        .take(count.max(1))
        .map(|k| {
            let pose = Pose::from_translation(c_test)
                .compose(&Pose::rz(yaw_of(k)))
                .compose(&Pose::from_translation(-c_demo));
            (scores[k], pose)
        })
        .collect())
}
