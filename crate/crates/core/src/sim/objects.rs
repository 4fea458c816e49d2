//! Procedural object families. Object frames sit at the centre of the base
//! on the table plane with z up; every symmetry is a rotation about that z axis.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};
use crate::se3::{Frame, PointCloud, Pose, Vec3};

/// Surface samples per canonical cloud.
pub const SURFACE_POINTS: usize = 2500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Mug,
    Box,
    Pan,
    Bottle,
    Tray,
    Kettle,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Mug,
        Category::Box,
        Category::Pan,
        Category::Bottle,
        Category::Tray,
        Category::Kettle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Mug => "mug",
            Category::Box => "box",
            Category::Pan => "pan",
            Category::Bottle => "bottle",
            Category::Tray => "tray",
            Category::Kettle => "kettle",
        }
    }

    pub fn symmetry(self) -> Symmetry {
        match self {
            Category::Mug | Category::Pan | Category::Kettle => Symmetry::None,
            Category::Box | Category::Tray => Symmetry::Discrete(2),
            Category::Bottle => Symmetry::Continuous,
        }
    }

    /// Parameter names and `(min, max)` ranges, in metres.
    pub fn param_bounds(self) -> &'static [(&'static str, f64, f64)] {
        match self {
            Category::Mug => &[("radius", 0.035, 0.045), ("height", 0.090, 0.100), ("handle_reach", 0.064, 0.076)],
            Category::Box => &[("length", 0.13, 0.16), ("width", 0.08, 0.10), ("height", 0.05, 0.07)],
            Category::Pan => &[("radius", 0.08, 0.12), ("wall", 0.03, 0.05), ("handle_length", 0.12, 0.17)],
            Category::Bottle => &[("radius", 0.030, 0.038), ("body_height", 0.12, 0.15), ("neck_radius", 0.012, 0.015)],
            Category::Tray => &[("length", 0.255, 0.285), ("width", 0.155, 0.175), ("rim", 0.015, 0.045)],
            Category::Kettle => &[("radius", 0.075, 0.085), ("height", 0.145, 0.155), ("handle_height", 0.05, 0.06)],
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

/// Rotations about the object z axis that leave the shape unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    None,
    /// `n`-fold: rotations by multiples of `2π / n`.
    Discrete(u32),
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: Category,
    pub instance_id: String,
    pub seed: u64,
    pub shape_params: Vec<f64>,
    /// Dense surface samples in the object frame.
    #[serde(skip, default = "empty_object_cloud")]
    pub canonical_cloud: PointCloud,
    /// Task feature frame (handle, slot, cap, ...) in the object frame.
    pub anchor: Pose,
    pub symmetry: Symmetry,
}

fn empty_object_cloud() -> PointCloud {
    PointCloud::from_trusted(Vec::new(), Frame::Object)
}

pub fn instance_id(category: Category, seed: u64) -> String {
    format!("{category}-{seed:016x}")
}

/// Inverse of [`instance_id`].
pub fn parse_instance_id(id: &str) -> Result<(Category, u64)> {
    let (cat, hex) = id
        .rsplit_once('-')
        .ok_or_else(|| Error::UnknownCategory(id.to_string()))?;
    let seed = u64::from_str_radix(hex, 16).map_err(|_| Error::UnknownCategory(id.to_string()))?;
    Ok((cat.parse()?, seed))
}

pub fn shape_params(category: Category, seed: u64) -> Vec<f64> {
    let mut r = rng(derive_seed(seed, 0));
    category
        .param_bounds()
        .iter()
        .map(|&(_, lo, hi)| r.random_range(lo..=hi))
        .collect()
}

fn down() -> Pose {
    Pose::from_axis_angle(&Vec3::x(), PI, Vec3::zeros())
}

/// Anchor pose from the shape parameters. Anchors carry the family's grasp
/// orientation: gripper z pointing down, gripper x along the object x axis.
pub fn anchor(category: Category, p: &[f64]) -> Pose {
    let at = |x: f64, y: f64, z: f64| Pose::from_xyz(x, y, z).compose(&down());
    match category {
        Category::Mug => at(p[2], 0.0, p[1] * 0.5),
        Category::Box => at(0.0, 0.0, p[2]),
        Category::Pan => at(p[0] + 0.5 * p[2], 0.0, PAN_HANDLE_Z),
        Category::Bottle => at(0.0, 0.0, bottle_top(p)),
        Category::Tray => at(0.0, 0.0, TRAY_BASE),
        Category::Kettle => at(0.0, 0.0, p[1] + p[2]),
    }
}

pub fn generate_object(category: &str, instance_seed: u64) -> Result<ObjectInstance> {
    Ok(generate(category.parse()?, instance_seed))
}

pub fn generate(category: Category, seed: u64) -> ObjectInstance {
    let params = shape_params(category, seed);
    let surfaces = surfaces(category, &params);
    let points = sample_surfaces(&surfaces, SURFACE_POINTS, derive_seed(seed, 1));
    ObjectInstance {
        category,
        instance_id: instance_id(category, seed),
        seed,
        anchor: anchor(category, &params),
        shape_params: params,
        canonical_cloud: PointCloud::from_trusted(points, Frame::Object),
        symmetry: category.symmetry(),
    }
}

const PAN_HANDLE_Z: f64 = 0.03;
const TRAY_BASE: f64 = 0.008;
const NECK_HEIGHT: f64 = 0.03;
const SHOULDER_HEIGHT: f64 = 0.03;

fn bottle_top(p: &[f64]) -> f64 {
    p[1] + SHOULDER_HEIGHT + NECK_HEIGHT
}

/// Parametric surface patches with known areas.
#[derive(Clone, Debug)]
enum Surface {
    /// Lateral surface of a (possibly conical) frustum about z.
    Frustum { r0: f64, r1: f64, z0: f64, z1: f64 },
    /// Annulus at height `z`.
    Disc { r_in: f64, r_out: f64, z: f64 },
    /// Parallelogram `origin + s u + t v`; `hole` is an excluded centred
    /// rectangle in the `(s, t)` square, rejected at sampling time.
    Patch { origin: Vec3, u: Vec3, v: Vec3, hole: Option<(f64, f64)> },
    /// Tube of radius `rho` swept along a circular arc in the xz plane.
    ArcTube { center: Vec3, rx: f64, rz: f64, a0: f64, a1: f64, rho: f64 },
    /// Tube along a straight segment.
    Rod { a: Vec3, b: Vec3, r0: f64, r1: f64 },
}

impl Surface {
    fn area(&self) -> f64 {
        match *self {
            Surface::Frustum { r0, r1, z0, z1 } => {
                PI * (r0 + r1) * ((r1 - r0).powi(2) + (z1 - z0).powi(2)).sqrt()
            }
            Surface::Disc { r_in, r_out, .. } => PI * (r_out * r_out - r_in * r_in),
            Surface::Patch { u, v, hole, .. } => {
                u.cross(&v).norm() * (1.0 - hole.map_or(0.0, |(a, b)| a * b))
            }
            Surface::ArcTube { rx, rz, a0, a1, rho, .. } => {
                // mean of the ellipse speed over the arc, numerically
                let n = 64;
                let len: f64 = (0..n)
                    .map(|i| {
                        let a = a0 + (a1 - a0) * (i as f64 + 0.5) / n as f64;
                        (rx * a.sin()).hypot(rz * a.cos()) * (a1 - a0) / n as f64
                    })
                    .sum();
                TAU * rho * len
            }
            Surface::Rod { a, b, r0, r1 } => PI * (r0 + r1) * (b - a).norm(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec3 {
        match *self {
            Surface::Frustum { r0, r1, z0, z1 } => {
                // area-uniform along the slant: radius grows linearly
                let u: f64 = rng.random();
                let t = if (r1 - r0).abs() < 1e-12 {
                    u
                } else {
                    ((r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt() - r0) / (r1 - r0)
                };
                let r = r0 + t * (r1 - r0);
                let a = rng.random_range(0.0..TAU);
                Vec3::new(r * a.cos(), r * a.sin(), z0 + t * (z1 - z0))
            }
            Surface::Disc { r_in, r_out, z } => {
                let r = (r_in * r_in + rng.random::<f64>() * (r_out * r_out - r_in * r_in)).sqrt();
                let a = rng.random_range(0.0..TAU);
                Vec3::new(r * a.cos(), r * a.sin(), z)
            }
            Surface::Patch { origin, u, v, hole } => loop {
                let (s, t): (f64, f64) = (rng.random(), rng.random());
                if let Some((hs, ht)) = hole {
                    if (s - 0.5).abs() < hs / 2.0 && (t - 0.5).abs() < ht / 2.0 {
                        continue;
                    }
                }
                break origin + u * s + v * t;
            },
            Surface::ArcTube { center, rx, rz, a0, a1, rho } => {
                let a = rng.random_range(a0..a1);
                let b = rng.random_range(0.0..TAU);
                let c = center + Vec3::new(rx * a.cos(), 0.0, rz * a.sin());
                let tangent = Vec3::new(-rx * a.sin(), 0.0, rz * a.cos()).normalize();
                let n1 = Vec3::y();
                let n2 = tangent.cross(&n1);
                c + (n1 * b.cos() + n2 * b.sin()) * rho
            }
            Surface::Rod { a, b, r0, r1 } => {
                let t: f64 = rng.random();
                let b_ang = rng.random_range(0.0..TAU);
                let axis = (b - a).normalize();
                let n1 = if axis.z.abs() < 0.9 { axis.cross(&Vec3::z()) } else { axis.cross(&Vec3::x()) }.normalize();
                let n2 = axis.cross(&n1);
                let r = r0 + t * (r1 - r0);
                a + (b - a) * t + (n1 * b_ang.cos() + n2 * b_ang.sin()) * r
            }
        }
    }
}

/// The four side faces and the top of an axis-aligned box centred on z.
fn box_faces(lx: f64, ly: f64, z0: f64, z1: f64, top_hole: Option<(f64, f64)>, top: bool) -> Vec<Surface> {
    let (hx, hy, h) = (lx / 2.0, ly / 2.0, z1 - z0);
    let mut out = vec![
        Surface::Patch { origin: Vec3::new(-hx, -hy, z0), u: Vec3::new(lx, 0.0, 0.0), v: Vec3::new(0.0, 0.0, h), hole: None },
        Surface::Patch { origin: Vec3::new(-hx, hy, z0), u: Vec3::new(lx, 0.0, 0.0), v: Vec3::new(0.0, 0.0, h), hole: None },
        Surface::Patch { origin: Vec3::new(-hx, -hy, z0), u: Vec3::new(0.0, ly, 0.0), v: Vec3::new(0.0, 0.0, h), hole: None },
        Surface::Patch { origin: Vec3::new(hx, -hy, z0), u: Vec3::new(0.0, ly, 0.0), v: Vec3::new(0.0, 0.0, h), hole: None },
    ];
    if top {
        out.push(Surface::Patch {
            origin: Vec3::new(-hx, -hy, z1),
            u: Vec3::new(lx, 0.0, 0.0),
            v: Vec3::new(0.0, ly, 0.0),
            hole: top_hole,
        });
    }
    out
}

fn surfaces(category: Category, p: &[f64]) -> Vec<Surface> {
    match category {
        Category::Mug => {
            let (r, h, reach) = (p[0], p[1], p[2]);
            let hr = (reach - r) * 0.5;
            vec![
                Surface::Frustum { r0: r, r1: r, z0: 0.0, z1: h },
                Surface::Disc { r_in: 0.0, r_out: r, z: 0.0 },
                Surface::Disc { r_in: r - 0.004, r_out: r, z: h },
                // semicircular handle joining the body wall at two heights
                Surface::ArcTube {
                    center: Vec3::new(r, 0.0, h * 0.5),
                    rx: reach - r,
                    rz: h * 0.3,
                    a0: -FRAC_PI_2,
                    a1: FRAC_PI_2,
                    rho: hr.clamp(0.006, 0.009),
                },
            ]
        }
        Category::Box => {
            let (l, w, h) = (p[0], p[1], p[2]);
            let slot = (0.05 / l, 0.008 / w);
            let mut s = box_faces(l, w, 0.0, h, Some(slot), true);
            // slot walls dropping into the lid
            s.extend(box_faces(0.05, 0.008, h - 0.015, h, None, false));
            s
        }
        Category::Pan => {
            let (r, wall, hl) = (p[0], p[1], p[2]);
            vec![
                Surface::Disc { r_in: 0.0, r_out: r, z: 0.005 },
                Surface::Frustum { r0: r, r1: r + 0.01, z0: 0.0, z1: wall },
                Surface::Rod {
                    a: Vec3::new(r + 0.005, 0.0, PAN_HANDLE_Z),
                    b: Vec3::new(r + hl, 0.0, PAN_HANDLE_Z + 0.01),
                    r0: 0.009,
                    r1: 0.007,
                },
            ]
        }
        Category::Bottle => {
            let (r, bh, rn) = (p[0], p[1], p[2]);
            let top = bottle_top(p);
            vec![
                Surface::Frustum { r0: r, r1: r, z0: 0.0, z1: bh },
                Surface::Frustum { r0: r, r1: rn, z0: bh, z1: bh + SHOULDER_HEIGHT },
                Surface::Frustum { r0: rn, r1: rn, z0: bh + SHOULDER_HEIGHT, z1: top },
                Surface::Disc { r_in: 0.0, r_out: rn, z: top },
                Surface::Disc { r_in: 0.0, r_out: r, z: 0.0 },
            ]
        }
        Category::Tray => {
            let (l, w, rim) = (p[0], p[1], p[2]);
            let mut s = box_faces(l, w, 0.0, rim, None, false);
            s.push(Surface::Patch {
                origin: Vec3::new(-l / 2.0, -w / 2.0, TRAY_BASE),
                u: Vec3::new(l, 0.0, 0.0),
                v: Vec3::new(0.0, w, 0.0),
                hole: None,
            });
            s.push(Surface::Patch {
                origin: Vec3::new(-l / 2.0, -w / 2.0, 0.0),
                u: Vec3::new(l, 0.0, 0.0),
                v: Vec3::new(0.0, w, 0.0),
                hole: None,
            });
            s
        }
        Category::Kettle => {
            let (r, h, hh) = (p[0], p[1], p[2]);
            vec![
                Surface::Frustum { r0: r, r1: r * 0.85, z0: 0.0, z1: h },
                Surface::Disc { r_in: 0.0, r_out: r * 0.85, z: h },
                Surface::Disc { r_in: 0.0, r_out: r, z: 0.0 },
                // arched carry handle spanning the lid along x
                Surface::ArcTube {
                    center: Vec3::new(0.0, 0.0, h),
                    rx: r * 0.6,
                    rz: hh,
                    a0: 0.0,
                    a1: PI,
                    rho: 0.011,
                },
                // spout on +x: the only feature breaking the 2-fold symmetry
                Surface::Rod {
                    a: Vec3::new(r * 0.95, 0.0, h * 0.45),
                    b: Vec3::new(r + 0.065, 0.0, h * 0.85),
                    r0: 0.016,
                    r1: 0.010,
                },
            ]
        }
    }
}

fn sample_surfaces(surfaces: &[Surface], n: usize, seed: u64) -> Vec<Vec3> {
    let areas: Vec<f64> = surfaces.iter().map(Surface::area).collect();
    let total: f64 = areas.iter().sum();
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let mut pick = r.random::<f64>() * total;
            let mut idx = surfaces.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            surfaces[idx].sample(&mut r)
        })
        .collect()
}
