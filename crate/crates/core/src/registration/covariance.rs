use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::se3::{PointCloud, Vec3};

pub const DEFAULT_NEIGHBORS: usize = 20;
/// Smallest eigenvalue relative to the largest after clamping.
pub const EPSILON_PLANE: f64 = 1e-3;

/// Per-point planar covariances of a cloud, in the cloud's frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalCovariances {
    pub matrices: Vec<Matrix3<f64>>,
}

impl LocalCovariances {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Each matrix divided by its largest eigenvalue, so eigenvalues lie in
    /// `[EPSILON_PLANE, 1]`.
    pub(crate) fn normalized(&self) -> Vec<Matrix3<f64>> {
        self.matrices
            .iter()
            .map(|m| {
                let top = m.symmetric_eigenvalues().max();
                if top > 0.0 {
                    m / top
                } else {
                    Matrix3::identity()
                }
            })
            .collect()
    }
}

fn clamped(cov: Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.max();
    if top <= 0.0 {
        return Matrix3::zeros();
    }
    let floor = EPSILON_PLANE * top;
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let m = eig.eigenvectors * Matrix3::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (m + m.transpose()) * 0.5
}

pub fn estimate_covariances(cloud: &PointCloud, k: usize) -> Result<LocalCovariances> {
    let pts = cloud.points();
    if k == 0 || pts.len() < k {
        return Err(Error::TooFewPoints { needed: k.max(1), got: pts.len() });
    }
    let tree = KdTree::new(pts);
    Ok(LocalCovariances {
        matrices: pts.iter().map(|p| clamped(neighbourhood_cov(&tree, pts, p, k))).collect(),
    })
}

fn neighbourhood_cov(tree: &KdTree, pts: &[Vec3], p: &Vec3, k: usize) -> Matrix3<f64> {
    let nbrs = tree.knn(p, k);
    let mean = nbrs.iter().fold(Vec3::zeros(), |a, n| a + pts[n.index]) / nbrs.len() as f64;
    let mut cov = Matrix3::zeros();
    for n in &nbrs {
        let d = pts[n.index] - mean;
        cov += d * d.transpose();
    }
    cov / nbrs.len() as f64
}
