use crate::error::{Error, Result};
use crate::se3::interpolate;

use super::EndEffectorState;

/// Tolerance below which an inserted waypoint would duplicate a segment end.
const END_SLACK: f64 = 1e-9;

pub const DEFAULT_SPACING: f64 = 0.01;

/// Densifies a trajectory so consecutive translations are at most `spacing`.
///
/// Every input waypoint is kept, so gripper events and both endpoints survive
/// exactly. Along each input segment new waypoints sit at arc-length
/// multiples of `spacing` from the segment start, with rotations blended by
/// [`interpolate`] and the gripper state of the segment start. Output time
/// indices are renumbered `0..n`.
pub fn resample_trajectory(
    trajectory: &[EndEffectorState],
    spacing: f64,
) -> Result<Vec<EndEffectorState>> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidSpacing(spacing));
    }
    if trajectory.len() < 2 {
        return Err(Error::TrajectoryTooShort(trajectory.len()));
    }
    let mut out = Vec::with_capacity(trajectory.len());
    out.push(trajectory[0]);
    for pair in trajectory.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let length = (b.pose.translation() - a.pose.translation()).norm();
        let mut k = 1usize;
        while (k as f64) * spacing < length - END_SLACK {
            let s = (k as f64) * spacing / length;
            out.push(EndEffectorState {
                pose: interpolate(&a.pose, &b.pose, s)?,
                gripper: a.gripper,
                time_index: 0,
            });
            k += 1;
        }
        out.push(*b);
    }
    for (i, state) in out.iter_mut().enumerate() {
        state.time_index = i as u64;
    }
    Ok(out)
}
