//! Sensor-aware bookkeeping for clouds taken by one fixed sensor.
//!
//! Two partial views of an object rarely show the same surface: the sides
//! facing the sensor change with placement. Penalising every unmatched point
//! therefore favours poses that line up the two viewing directions instead
//! of the objects. With the sensor position known, an unmatched point is only
//! penalised if it faces the sensor in the other view, i.e. it should have
//! been seen there.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::kdtree::KdTree;
use crate::se3::Vec3;

/// Cosine between normal and line of sight above which a point is expected
/// to be observed.
pub const FACING_COS: f64 = 0.3;
const UPWARD_COS: f64 = 0.8;
const MIN_UPWARD: usize = 10;

/// Unit normals (least-variance directions) turned towards `viewpoint`.
pub fn oriented_normals(points: &[Vec3], covariances: &[Matrix3<f64>], viewpoint: &Vec3) -> Vec<Vec3> {
    points
        .iter()
        .zip(covariances)
        .map(|(p, m)| {
            let eig = SymmetricEigen::new(*m);
            let n = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
            if n.dot(&(viewpoint - p)) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect()
}

/// Whether a surface point at `p` with normal `n` faces a sensor at `eye`.
pub fn faces(eye: &Vec3, p: &Vec3, n: &Vec3) -> bool {
    let sight = eye - p;
    n.dot(&sight) > FACING_COS * sight.norm()
}

pub(crate) struct SensorView {
    pub eye: Vec3,
    pub demo_normals: Vec<Vec3>,
    pub test_normals: Vec<Vec3>,
    pub demo_tree: KdTree,
}

impl SensorView {
    pub fn new(demo: &[Vec3], demo_cov: &[Matrix3<f64>], test: &[Vec3], test_cov: &[Matrix3<f64>], eye: Vec3) -> Self {
        Self {
            eye,
            demo_normals: oriented_normals(demo, demo_cov, &eye),
            test_normals: oriented_normals(test, test_cov, &eye),
            demo_tree: KdTree::new(demo),
        }
    }
}

/// Centroid of the points whose normal is within ~35° of vertical: tops,
/// rims and floors look alike from any placement, whereas visible side
/// walls drag the plain centroid towards the sensor. Falls back to the plain
/// centroid when too few points face up.
pub fn upward_centroid(points: &[Vec3], normals: &[Vec3]) -> Vec3 {
    let up: Vec<&Vec3> = points
        .iter()
        .zip(normals)
        .filter(|(_, n)| n.z.abs() > UPWARD_COS)
        .map(|(p, _)| p)
        .collect();
    let chosen: Vec<&Vec3> = if up.len() >= MIN_UPWARD { up } else { points.iter().collect() };
    chosen.iter().fold(Vec3::zeros(), |a, p| a + **p) / chosen.len().max(1) as f64
}
