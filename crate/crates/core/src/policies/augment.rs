use std::f64::consts::PI;

use nalgebra::UnitQuaternion;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::rng::rng;
use crate::se3::{PointCloud, Pose, Vec3};

/// Point-to-cluster assignment produced by [`mask_partition`].
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPartition {
    /// Indices of the furthest-point seeds, in selection order.
    pub seeds: Vec<usize>,
    /// Cluster of every input point.
    pub labels: Vec<usize>,
    /// Dropped clusters, ascending.
    pub masked: Vec<usize>,
    pub kept: PointCloud,
    pub dropped: PointCloud,
}

fn furthest_point_seeds(points: &[Vec3], count: usize, first: usize) -> Vec<usize> {
    let mut seeds = vec![first];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while seeds.len() < count {
        // strict > keeps the lowest index among equally distant points
        let mut best = 0;
        for (i, d) in dist.iter().enumerate() {
            if *d > dist[best] {
                best = i;
            }
        }
        seeds.push(best);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - points[best]).norm_squared());
        }
    }
    seeds
}

/// Clusters the cloud around furthest-point seeds and drops `masked`
/// randomly chosen clusters, imitating partial occlusion.
pub fn mask_partition(cloud: &PointCloud, clusters: usize, masked: usize, seed: u64) -> Result<MaskPartition> {
    if clusters == 0 || cloud.len() < clusters {
        return Err(Error::TooFewPoints { needed: clusters.max(1), got: cloud.len() });
    }
    if masked > clusters {
        return Err(Error::InvalidCount { k: masked as u64, n: clusters as u64 });
    }
    let points = cloud.points();
    let mut rng = rng(seed);
    let first = rng.random_range(0..points.len());
    let seeds = furthest_point_seeds(points, clusters, first);
    let seed_points: Vec<Vec3> = seeds.iter().map(|&i| points[i]).collect();
    let tree = KdTree::new(&seed_points);
    let labels: Vec<usize> = points
        .iter()
        .map(|p| tree.nearest(p).expect("seeds non-empty").index)
        .collect();
    let mut chosen = sample(&mut rng, clusters, masked).into_vec();
    chosen.sort_unstable();
    let is_masked = |i: usize| chosen.binary_search(&labels[i]).is_ok();
    Ok(MaskPartition {
        kept: cloud.select(|i| !is_masked(i)),
        dropped: cloud.select(is_masked),
        seeds,
        labels,
        masked: chosen,
    })
}

pub fn mask_augment(cloud: &PointCloud, clusters: usize, masked: usize, seed: u64) -> Result<PointCloud> {
    Ok(mask_partition(cloud, clusters, masked, seed)?.kept)
}

/// Independent zero-mean Gaussian offset on every coordinate.
pub fn jitter_cloud(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::OutOfRange(sigma));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| Error::OutOfRange(sigma))?;
    let mut rng = rng(seed);
    let points = cloud
        .points()
        .iter()
        .map(|p| p + Vec3::from_fn(|_, _| normal.sample(&mut rng)))
        .collect();
    PointCloud::new(points, cloud.frame())
}

/// Magnitude ranges for random pose offsets; angles in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBounds {
    pub min_translation: f64,
    pub max_translation: f64,
    pub min_rotation: f64,
    pub max_rotation: f64,
}

impl PerturbationBounds {
    /// Offsets for the synthetic alignment data: 1 mm – 1 cm, 0.5° – 5°.
    pub const ALIGNMENT: Self = Self {
        min_translation: 0.001,
        max_translation: 0.01,
        min_rotation: 0.5 * PI / 180.0,
        max_rotation: 5.0 * PI / 180.0,
    };

    /// Interaction-policy augmentation: up to 0.9 cm and 5°.
    pub const INTERACTION: Self = Self {
        min_translation: 0.0,
        max_translation: 0.009,
        min_rotation: 0.0,
        max_rotation: 5.0 * PI / 180.0,
    };

    pub fn contains(&self, a: &Pose, b: &Pose) -> bool {
        let (dt, dr) = crate::se3::pose_distance(a, b);
        let slack = 1e-12;
        dt >= self.min_translation - slack
            && dt <= self.max_translation + slack
            && dr >= self.min_rotation - slack
            && dr <= self.max_rotation + slack
    }
}

/// Offsets `pose` by a translation of uniform magnitude along a uniform
/// direction and a rotation of uniform angle about a uniform axis, applied in
/// the pose's own frame.
pub fn perturb_pose<R: Rng + ?Sized>(pose: &Pose, bounds: &PerturbationBounds, rng: &mut R) -> Pose {
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let dt = rng.random_range(bounds.min_translation..=bounds.max_translation);
    let angle = rng.random_range(bounds.min_rotation..=bounds.max_rotation);
    let q = UnitQuaternion::from_scaled_axis(Vec3::from(axis) * angle);
    Pose::new(pose.rotation() * q, pose.translation() + Vec3::from(dir) * dt)
}
