//! Virtual depth camera: hidden point removal from a single viewpoint.

use std::collections::{BTreeMap, BTreeSet};

use qhull::Qh;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::objects::ObjectInstance;
use crate::error::{Error, Result};
use crate::rng::rng;
use crate::se3::{Frame, PointCloud, Pose, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSpec {
    /// Flip radius as a multiple of the farthest point's distance.
    pub gamma: f64,
    /// Angular size of one depth pixel (radians); at most one return per
    /// pixel, the nearest. 0 disables the pixel grid.
    pub pixel_angle: f64,
    /// Visible points kept after subsampling.
    pub max_points: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            pixel_angle: 0.002,
            max_points: 1500,
        }
    }
}

/// Head camera looking straight down on the middle of the workspace; the
/// camera z axis is the viewing direction.
pub fn default_camera() -> Pose {
    Pose::from_axis_angle(&Vec3::x(), std::f64::consts::PI, Vec3::new(0.7, 0.0, 1.2))
}

/// Indices of the points visible from `viewpoint` (ascending). Each point is
/// pushed out along its viewing ray by spherical flipping; the points that
/// land on the convex hull of the flipped set plus the viewpoint are visible.
pub fn hidden_point_removal(points: &[Vec3], viewpoint: &Vec3, gamma: f64) -> Result<Vec<usize>> {
    let rel: Vec<Vec3> = points.iter().map(|p| p - viewpoint).collect();
    let max_norm = rel.iter().map(|q| q.norm()).fold(0.0, f64::max);
    if max_norm == 0.0 {
        return Err(Error::NothingVisible);
    }
    let radius = gamma * max_norm;
    let flipped: Vec<[f64; 3]> = rel
        .iter()
        .map(|q| {
            let n = q.norm();
            if n == 0.0 {
                [0.0; 3]
            } else {
                let f = q + q * (2.0 * (radius - n) / n);
                [f.x, f.y, f.z]
            }
        })
        .chain(std::iter::once([0.0; 3]))
        .collect();
    if flipped.len() < 5 {
        // too few for a 3-d hull: every point is trivially on it
        return Ok((0..points.len()).collect());
    }
    let qh = Qh::builder()
        .compute(true)
        .build_from_iter(flipped)
        .map_err(|_| Error::NothingVisible)?;
    let visible: BTreeSet<usize> = qh
        .vertices()
        .filter_map(|v| v.index(&qh))
        .filter(|&i| i < points.len())
        .collect();
    Ok(visible.into_iter().collect())
}

/// Partial robot-frame cloud of a posed object as seen from `camera`.
pub fn render_partial_cloud(
    instance: &ObjectInstance,
    object_pose: &Pose,
    camera: &Pose,
    spec: &RenderSpec,
    seed: u64,
) -> Result<PointCloud> {
    let eye = *camera.translation();
    let forward = camera.rotation() * Vec3::z();
    let posed: Vec<Vec3> = instance
        .canonical_cloud
        .points()
        .iter()
        .map(|p| object_pose.transform_point(p))
        .filter(|p| (p - eye).dot(&forward) > 0.0)
        .collect();
    if posed.is_empty() {
        return Err(Error::NothingVisible);
    }
    let mut visible = hidden_point_removal(&posed, &eye, spec.gamma)?;
    if spec.pixel_angle > 0.0 {
        visible = nearest_per_pixel(&posed, &visible, camera, spec.pixel_angle);
    }
    if visible.is_empty() {
        return Err(Error::NothingVisible);
    }
    let keep: Vec<usize> = if visible.len() > spec.max_points {
        let mut chosen = sample(&mut rng(seed), visible.len(), spec.max_points).into_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| visible[i]).collect()
    } else {
        visible
    };
    Ok(PointCloud::from_trusted(keep.into_iter().map(|i| posed[i]).collect(), Frame::Robot))
}

/// Keeps, among `candidates`, the point nearest the camera in each pixel of
/// a pinhole grid; ties go to the smaller index. Surfaces seen edge-on thus
/// return few points, as on a real depth sensor.
fn nearest_per_pixel(points: &[Vec3], candidates: &[usize], camera: &Pose, pixel_angle: f64) -> Vec<usize> {
    let to_cam = camera.inverse();
    let mut best: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    for &i in candidates {
        let c = to_cam.transform_point(&points[i]);
        if c.z <= 0.0 {
            continue;
        }
        let key = ((c.x / c.z / pixel_angle).floor() as i64, (c.y / c.z / pixel_angle).floor() as i64);
        let entry = best.entry(key).or_insert((c.z, i));
        if c.z < entry.0 || (c.z == entry.0 && i < entry.1) {
            *entry = (c.z, i);
        }
    }
    let mut kept: Vec<usize> = best.into_values().map(|(_, i)| i).collect();
    kept.sort_unstable();
    kept
}
