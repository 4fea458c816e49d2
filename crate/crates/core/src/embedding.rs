//! Soft occupancy grid over the robot-frame workspace, used as a joint
//! pose-and-geometry descriptor for retrieval.
//!
//! The grid is a lattice of `nx * ny * nz` nodes spanning `[origin, origin + extent]`.
//! Each point spreads trilinear weights over the 8 nodes of its enclosing
//! cell, so similarity varies continuously with object pose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{Frame, PointCloud, Vec3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splat {
    #[default]
    Trilinear,
    /// Hard count into the nearest node.
    Nearest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub extent: [f64; 3],
    pub resolution: [usize; 3],
    #[serde(default)]
    pub splat: Splat,
}

impl Default for GridSpec {
    /// 80 x 45 cm tabletop plus 40 cm of height, about 2.5 cm per cell.
    fn default() -> Self {
        Self {
            origin: [0.30, -0.225, 0.0],
            extent: [0.80, 0.45, 0.40],
            resolution: [32, 24, 16],
            splat: Splat::Trilinear,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            if !(self.extent[axis].is_finite() && self.extent[axis] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "extent[{axis}] must be positive, got {}",
                    self.extent[axis]
                )));
            }
            if !self.origin[axis].is_finite() {
                return Err(Error::InvalidGrid(format!("origin[{axis}] is not finite")));
            }
            if self.resolution[axis] < 2 {
                return Err(Error::InvalidGrid(format!(
                    "resolution[{axis}] must be at least 2, got {}",
                    self.resolution[axis]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distance between neighbouring lattice nodes along each axis.
    pub fn cell_size(&self) -> Vec3 {
        Vec3::from_fn(|axis, _| self.extent[axis] / (self.resolution[axis] - 1) as f64)
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.resolution[1] + j) * self.resolution[2] + k
    }

    /// Continuous lattice coordinates of `p`, or `None` outside the grid.
    fn lattice_coords(&self, p: &Vec3) -> Option<[f64; 3]> {
        let mut u = [0.0; 3];
        for axis in 0..3 {
            let n = (self.resolution[axis] - 1) as f64;
            let v = (p[axis] - self.origin[axis]) / self.extent[axis] * n;
            if !(0.0..=n).contains(&v) {
                return None;
            }
            u[axis] = v;
        }
        Some(u)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryEmbedding {
    values: Vec<f64>,
    grid: GridSpec,
}

impl GeometryEmbedding {
    /// Wraps raw non-negative values (not necessarily normalized).
    pub fn from_values(values: Vec<f64>, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "embedding has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidGrid(
                "embedding values must be finite and non-negative".into(),
            ));
        }
        Ok(Self { values, grid })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_values(self.values.iter().map(|v| v * factor).collect(), self.grid.clone())
    }
}

pub fn occupancy_embedding(cloud: &PointCloud, grid: &GridSpec) -> Result<GeometryEmbedding> {
    grid.validate()?;
    cloud.ensure_non_empty()?;
    cloud.ensure_frame(Frame::Robot)?;

    let mut values = vec![0.0; grid.len()];
    let mut inside = 0usize;
    for p in cloud.points() {
        let Some(u) = grid.lattice_coords(p) else {
            continue;
        };
        inside += 1;
        match grid.splat {
            Splat::Nearest => {
                let [i, j, k] = u.map(|c| c.round() as usize);
                values[grid.index(i, j, k)] += 1.0;
            }
            Splat::Trilinear => {
                let mut base = [0usize; 3];
                let mut frac = [0.0; 3];
                for axis in 0..3 {
                    // the upper boundary belongs to the last cell
                    let b = (u[axis].floor() as usize).min(grid.resolution[axis] - 2);
                    base[axis] = b;
                    frac[axis] = u[axis] - b as f64;
                }
                for corner in 0..8 {
                    let mut w = 1.0;
                    let mut idx = [0usize; 3];
                    for axis in 0..3 {
                        let upper = (corner >> axis) & 1 == 1;
                        idx[axis] = base[axis] + upper as usize;
                        w *= if upper { frac[axis] } else { 1.0 - frac[axis] };
                    }
                    if w > 0.0 {
                        values[grid.index(idx[0], idx[1], idx[2])] += w;
                    }
                }
            }
        }
    }
    if inside == 0 {
        return Err(Error::OutOfWorkspace);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(GeometryEmbedding {
        values,
        grid: grid.clone(),
    })
}

/// Cosine similarity; both embeddings must share a grid and have non-zero norm.
pub fn cosine_similarity(a: &GeometryEmbedding, b: &GeometryEmbedding) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroEmbedding);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
