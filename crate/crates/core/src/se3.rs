//! Rigid-body geometry: poses, relative motions and point clouds.
//!
//! Rotations are unit quaternions kept in canonical sign (`w >= 0`), so two
//! poses describing the same transform serialize identically.

use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Coordinate frame a point cloud is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Robot,
    EndEffector,
    /// Canonical frame of a simulated object.
    Object,
}

/// A rigid transform in SE(3). Translation in metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

fn canonical(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    // Leaves already-unit quaternions untouched so stored poses reload bit-exactly.
    let q = if (q.norm_squared() - 1.0).abs() > 4.0 * f64::EPSILON {
        q.normalize()
    } else {
        q
    };
    let flip = if q.w != 0.0 {
        q.w < 0.0
    } else {
        // 180 degree rotations: pick the sign with the first non-zero
        // vector component positive.
        [q.i, q.j, q.k]
            .into_iter()
            .find(|c| *c != 0.0)
            .is_some_and(|c| c < 0.0)
    };
    Unit::new_unchecked(if flip { -q } else { q })
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: canonical(rotation.into_inner()),
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Self {
        Self::from_translation(Vec3::new(x, y, z))
    }

    /// Rotation about the robot's vertical axis, through the origin.
    pub fn rz(angle: f64) -> Self {
        Self::from_rotation(UnitQuaternion::from_axis_angle(&Vec3::z_axis(), angle))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = match Unit::try_new(*axis, 1e-15) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Self::new(rotation, translation)
    }

    /// Builds a pose from `[tx, ty, tz, qw, qx, qy, qz]`.
    pub fn from_array(v: [f64; 7]) -> Self {
        Self {
            rotation: canonical(Quaternion::new(v[3], v[4], v[5], v[6])),
            translation: Vec3::new(v[0], v[1], v[2]),
        }
    }

    /// `[tx, ty, tz, qw, qx, qy, qz]`, the ordering used by every file format.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.rotation.quaternion();
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self` followed by `other`, with `other` expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: canonical((self.rotation * other.rotation).into_inner()),
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            rotation: canonical(rotation.into_inner()),
            translation: -(rotation * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Heading of the rotated x axis projected on the horizontal plane.
    pub fn yaw(&self) -> f64 {
        let x = self.rotation * Vec3::x();
        x.y.atan2(x.x)
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl std::ops::Mul for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 7]>::deserialize(d)?;
        Ok(Pose::from_array(v))
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(a: &Pose) -> Pose {
    a.inverse()
}

/// Translation distance and geodesic rotation angle (in `[0, pi]`) between two poses.
pub fn pose_distance(a: &Pose, b: &Pose) -> (f64, f64) {
    let dt = (a.translation - b.translation).norm();
    (dt, rotation_angle(&(a.rotation.inverse() * b.rotation)))
}

/// Geodesic angle of a rotation, `2 atan2(|v|, |w|)`.
pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// Blend between two poses: linear in translation, shortest arc in rotation
/// (normalized linear quaternion blend). Endpoints are returned unchanged.
pub fn interpolate(a: &Pose, b: &Pose, s: f64) -> Result<Pose> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange(s));
    }
    if s == 0.0 {
        return Ok(*a);
    }
    if s == 1.0 {
        return Ok(*b);
    }
    let qa = a.rotation.into_inner();
    let mut qb = b.rotation.into_inner();
    if qa.dot(&qb) < 0.0 {
        qb = -qb;
    }
    let q = qa * (1.0 - s) + qb * s;
    Ok(Pose {
        rotation: canonical(q),
        translation: a.translation + (b.translation - a.translation) * s,
    })
}

/// Motion of a successor pose expressed in its predecessor's frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeMotion {
    pub delta: Pose,
}

impl RelativeMotion {
    pub fn between(from: &Pose, to: &Pose) -> Self {
        Self {
            delta: from.inverse().compose(to),
        }
    }

    pub fn apply(&self, from: &Pose) -> Pose {
        from.compose(&self.delta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<Vec3>,
    frame: Frame,
}

impl PointCloud {
    /// Rejects non-finite coordinates. Empty clouds are allowed here; the
    /// operations that need points check for them.
    pub fn new(points: Vec<Vec3>, frame: Frame) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::parse("<cloud>", i + 1, "non-finite coordinate"));
        }
        Ok(Self { points, frame })
    }

    pub(crate) fn from_trusted(points: Vec<Vec3>, frame: Frame) -> Self {
        debug_assert!(points.iter().all(|p| p.iter().all(|c| c.is_finite())));
        Self { points, frame }
    }

    pub fn robot(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, Frame::Robot)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ensure_non_empty(&self) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }

    pub fn ensure_frame(&self, expected: Frame) -> Result<()> {
        if self.frame != expected {
            return Err(Error::WrongFrame {
                expected,
                actual: self.frame,
            });
        }
        Ok(())
    }

    pub fn centroid(&self) -> Result<Vec3> {
        self.ensure_non_empty()?;
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        Ok(sum / self.points.len() as f64)
    }

    /// Keeps the points whose index satisfies `keep`.
    pub fn select(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let points = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, p)| *p)
            .collect();
        PointCloud {
            points,
            frame: self.frame,
        }
    }
}

pub fn transform_cloud(pose: &Pose, cloud: &PointCloud) -> Result<PointCloud> {
    cloud.ensure_non_empty()?;
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| pose.transform_point(p)).collect(),
        frame: cloud.frame,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use super::*;

    fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
        let (dt, dr) = pose_distance(a, b);
        dt < tol && dr < tol
    }

    #[test]
    fn identity_composition() {
        let t = Pose::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7, Vec3::new(0.1, -0.2, 0.3));
        assert_eq!(Pose::identity().compose(&t), t);
        assert!(close(&t.compose(&t.inverse()), &Pose::identity(), 1e-9));
    }

    #[test]
    fn compose_matches_homogeneous_matrices() {
        let a = Pose::rz(FRAC_PI_2);
        let b = Pose::from_xyz(1.0, 0.0, 0.0);
        let c = a.compose(&b);
        let expected = a.to_homogeneous() * b.to_homogeneous();
        assert!((c.to_homogeneous() - expected).abs().max() < 1e-12);
        assert!((c.translation() - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        assert!(rotation_angle(&(c.rotation().inverse() * a.rotation())) < 1e-12);
    }

    #[test]
    fn inverse_of_translation() {
        let inv = Pose::from_xyz(0.1, 0.0, 0.0).inverse();
        assert_eq!(inv.translation(), &Vec3::new(-0.1, 0.0, 0.0));
        assert_eq!(Pose::identity().inverse(), Pose::identity());
    }

    #[test]
    fn inverse_matches_matrix_inverse() {
        let a = Pose::from_axis_angle(&Vec3::new(-0.3, 0.5, 0.8), 2.1, Vec3::new(0.4, 0.2, -1.0));
        let m = a.to_homogeneous().try_inverse().unwrap();
        assert!((a.inverse().to_homogeneous() - m).abs().max() < 1e-9);
    }

    #[test]
    fn distances() {
        assert_eq!(pose_distance(&Pose::identity(), &Pose::identity()), (0.0, 0.0));
        let (dt, dr) = pose_distance(&Pose::identity(), &Pose::rz(PI));
        assert_eq!(dt, 0.0);
        assert!((dr - PI).abs() < 1e-12);
        let b = Pose::new(
            *Pose::rz(FRAC_PI_2).rotation(),
            Vec3::new(3.0, 4.0, 0.0),
        );
        let (dt, dr) = pose_distance(&Pose::identity(), &b);
        assert!((dt - 5.0).abs() < 1e-12);
        assert!((dr - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn transform_single_point() {
        let c = PointCloud::robot(vec![Vec3::zeros()]).unwrap();
        let out = transform_cloud(&Pose::from_xyz(0.0, 0.0, 0.05), &c).unwrap();
        assert_eq!(out.points()[0], Vec3::new(0.0, 0.0, 0.05));
        assert_eq!(out.frame(), Frame::Robot);
        let empty = PointCloud::robot(vec![]).unwrap();
        assert!(matches!(
            transform_cloud(&Pose::identity(), &empty),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let a = Pose::identity();
        let b = Pose::from_xyz(0.1, 0.0, 0.0);
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
        let mid = interpolate(&a, &b, 0.5).unwrap();
        assert!((mid.translation().x - 0.05).abs() < 1e-15);
        assert!(matches!(interpolate(&a, &b, 1.5), Err(Error::OutOfRange(_))));
        assert!(matches!(interpolate(&a, &b, f64::NAN), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn canonical_sign() {
        let p = Pose::from_array([0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p, Pose::identity());
        let half_turn = Pose::from_array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(half_turn.to_array()[6], 1.0);
    }

    #[test]
    fn non_finite_points_rejected() {
        assert!(PointCloud::robot(vec![Vec3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }
}
