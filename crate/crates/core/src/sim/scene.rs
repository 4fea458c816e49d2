use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::objects::{Category, ObjectInstance};
use super::render::{default_camera, render_partial_cloud, RenderSpec};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};
use crate::se3::{PointCloud, Pose, Vec3};
use crate::store::{DemoInput, EndEffectorState, Gripper};

/// Tabletop region objects are placed in (robot frame, table at z = 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Default for Workspace {
    /// 0.80 × 0.45 m in front of the robot.
    fn default() -> Self {
        Self {
            x: (0.30, 1.10),
            y: (-0.225, 0.225),
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: &Vec3) -> bool {
        (self.x.0..=self.x.1).contains(&p.x) && (self.y.0..=self.y.1).contains(&p.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneMode {
    /// Full ±180° yaw, clean clouds.
    Controlled,
    /// Up to ±45° yaw, 1 mm sensor noise.
    Thousand,
}

impl SceneMode {
    pub fn rotation_range(self) -> f64 {
        match self {
            SceneMode::Controlled => PI,
            SceneMode::Thousand => PI / 4.0,
        }
    }

    pub fn noise_sigma(self) -> f64 {
        match self {
            SceneMode::Controlled => 0.0,
            SceneMode::Thousand => 0.001,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// 1 cm / 10°.
    Loose,
    /// 3 mm / 3°.
    Tight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub micro_skill: String,
    pub category: Category,
    /// Success thresholds: metres, radians.
    pub threshold_translation: f64,
    pub threshold_rotation: f64,
    /// `{}` is replaced by a colour adjective.
    pub description_template: String,
}

impl TaskSpec {
    pub fn for_category(category: Category) -> Self {
        let (skill, template, tol) = match category {
            Category::Mug => ("pick up mug", "pick up the {} mug", Tolerance::Loose),
            Category::Box => ("insert card into box", "insert card into the {} box", Tolerance::Tight),
            Category::Pan => ("lift pan", "lift the {} pan", Tolerance::Loose),
            Category::Bottle => ("open bottle", "open the {} bottle", Tolerance::Tight),
            Category::Tray => ("place block on tray", "place block on the {} tray", Tolerance::Loose),
            Category::Kettle => ("pour from kettle", "pour from the {} kettle", Tolerance::Loose),
        };
        let (t, r) = match tol {
            Tolerance::Loose => (0.01, 10f64.to_radians()),
            Tolerance::Tight => (0.003, 3f64.to_radians()),
        };
        Self {
            micro_skill: skill.into(),
            category,
            threshold_translation: t,
            threshold_rotation: r,
            description_template: template.into(),
        }
    }

    pub fn tolerance(&self) -> Tolerance {
        if self.threshold_translation <= 0.003 + 1e-12 {
            Tolerance::Tight
        } else {
            Tolerance::Loose
        }
    }

    pub fn describe(&self, seed: u64) -> String {
        const COLOURS: [&str; 6] = ["red", "blue", "green", "white", "black", "yellow"];
        let colour = COLOURS[(derive_seed(seed, 77) % COLOURS.len() as u64) as usize];
        self.description_template.replace("{}", colour)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold_translation > 0.0 && self.threshold_rotation > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("success thresholds must be positive".into()))
        }
    }

    /// Demonstrated interaction in the anchor frame: pose offsets and gripper.
    pub fn script(&self) -> Vec<(Pose, Gripper)> {
        use Gripper::{Closed, Open};
        let up = |z: f64| Pose::from_xyz(0.0, 0.0, -z);
        match self.category {
            // the anchor z axis points down, so "up" is along −z
            Category::Mug | Category::Pan => vec![
                (up(0.06), Open),
                (up(0.0), Open),
                (up(0.0), Closed),
                (up(0.10), Closed),
            ],
            Category::Box => vec![(up(0.08), Closed), (up(0.01), Closed), (up(0.01), Open), (up(0.08), Open)],
            Category::Bottle => vec![
                (up(0.05), Open),
                (up(0.0), Open),
                (up(0.0), Closed),
                (up(0.01).compose(&Pose::rz(PI / 2.0)), Closed),
            ],
            Category::Tray => vec![(up(0.15), Closed), (up(0.03), Closed), (up(0.03), Open), (up(0.12), Open)],
            Category::Kettle => vec![
                (up(0.05), Open),
                (up(0.0), Open),
                (up(0.0), Closed),
                (up(0.10), Closed),
                (up(0.10).compose(&Pose::from_axis_angle(&Vec3::y(), -PI / 6.0, Vec3::zeros())), Closed),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub object: ObjectInstance,
    pub object_pose: Pose,
    pub workspace: Workspace,
    pub mode: SceneMode,
    pub rotation_range: f64,
    pub occlusion_fraction: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

pub fn random_object_pose<R: Rng + ?Sized>(workspace: &Workspace, rotation_range: f64, rng: &mut R) -> Pose {
    let x = rng.random_range(workspace.x.0..=workspace.x.1);
    let y = rng.random_range(workspace.y.0..=workspace.y.1);
    let yaw = rng.random_range(-rotation_range..=rotation_range);
    Pose::from_translation(Vec3::new(x, y, 0.0)).compose(&Pose::rz(yaw))
}

pub fn randomize_scene(task: &TaskSpec, instance: &ObjectInstance, mode: SceneMode, rng_seed: u64) -> SceneSpec {
    debug_assert_eq!(task.category, instance.category);
    let workspace = Workspace::default();
    let rotation_range = mode.rotation_range();
    let object_pose = random_object_pose(&workspace, rotation_range, &mut rng(derive_seed(rng_seed, 0)));
    SceneSpec {
        object: instance.clone(),
        object_pose,
        workspace,
        mode,
        rotation_range,
        occlusion_fraction: 0.0,
        noise_sigma: mode.noise_sigma(),
        rng_seed,
    }
}

impl SceneSpec {
    pub fn with_occlusion(mut self, fraction: f64) -> Self {
        self.occlusion_fraction = fraction;
        self
    }

    /// Anchor in the robot frame.
    pub fn anchor(&self) -> Pose {
        self.object_pose.compose(&self.object.anchor)
    }

    /// Segmented object cloud as the robot would observe it: rendered, then
    /// occluded (clusters masked) and noised per the scene settings.
    pub fn observe(&self, render: &RenderSpec) -> Result<PointCloud> {
        let mut cloud = render_partial_cloud(
            &self.object,
            &self.object_pose,
            &default_camera(),
            render,
            derive_seed(self.rng_seed, 1),
        )?;
        if self.occlusion_fraction > 0.0 {
            let clusters = 10;
            let masked = (self.occlusion_fraction * clusters as f64).round() as usize;
            cloud = crate::policies::mask_augment(&cloud, clusters, masked, derive_seed(self.rng_seed, 2))?;
        }
        if self.noise_sigma > 0.0 {
            cloud = crate::policies::jitter_cloud(&cloud, self.noise_sigma, derive_seed(self.rng_seed, 3))?;
        }
        Ok(cloud)
    }
}

/// Scripted demonstration of `task` in `scene`, ready for ingestion.
pub fn record_demo(task: &TaskSpec, scene: &SceneSpec, id: &str, render: &RenderSpec) -> Result<DemoInput> {
    let anchor = scene.anchor();
    let trajectory = task
        .script()
        .into_iter()
        .enumerate()
        .map(|(i, (offset, gripper))| EndEffectorState {
            pose: anchor.compose(&offset),
            gripper,
            time_index: i as u64,
        })
        .collect();
    Ok(DemoInput {
        id: id.to_string(),
        description: task.describe(scene.rng_seed),
        object_cloud: scene.observe(render)?,
        trajectory,
        object_instance_id: Some(scene.object.instance_id.clone()),
        object_pose: Some(scene.object_pose),
    })
}
