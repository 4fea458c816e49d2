//! Demonstration dataset: ingestion, resampling, micro-skill indexing and the
//! on-disk archive.

mod archive;
mod parse;
mod resample;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::embedding::{occupancy_embedding, GeometryEmbedding, GridSpec};
use crate::error::{Error, Result};
use crate::se3::{PointCloud, Pose};

pub use archive::{
    format_cloud, format_trajectory_rows, parse_cloud, parse_trajectory_rows, read_cloud_file,
    read_trajectory_file, MANIFEST_FILE,
};
pub use parse::{parse_micro_skill, SkillParser, TemplateMode};
pub use resample::{resample_trajectory, DEFAULT_SPACING};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gripper {
    Open,
    Closed,
}

impl Gripper {
    pub fn as_bit(self) -> u8 {
        match self {
            Gripper::Open => 0,
            Gripper::Closed => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Gripper::Open),
            1 => Some(Gripper::Closed),
            _ => None,
        }
    }
}

/// End-effector pose in the robot base frame plus the binary gripper state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndEffectorState {
    pub pose: Pose,
    pub gripper: Gripper,
    pub time_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub description: String,
    pub micro_skill: String,
    /// Segmented object at the first frame, robot frame.
    pub object_cloud: PointCloud,
    /// Interaction phase only; the first pose is the alignment target.
    pub trajectory: Vec<EndEffectorState>,
    pub embedding: GeometryEmbedding,
    /// Simulator ground truth, absent for real recordings.
    pub object_instance_id: Option<String>,
    pub object_pose: Option<Pose>,
}

impl Demonstration {
    pub fn alignment_target(&self) -> Pose {
        self.trajectory[0].pose
    }
}

pub fn alignment_target(demo: &Demonstration) -> Pose {
    demo.alignment_target()
}

/// Raw recording handed to [`Dataset::ingest`].
#[derive(Clone, Debug)]
pub struct DemoInput {
    pub id: String,
    pub description: String,
    pub object_cloud: PointCloud,
    pub trajectory: Vec<EndEffectorState>,
    pub object_instance_id: Option<String>,
    pub object_pose: Option<Pose>,
}

pub(crate) fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidId(id.to_string()))
    }
}

fn validate_trajectory(trajectory: &[EndEffectorState]) -> Result<()> {
    if trajectory.len() < 2 {
        return Err(Error::TrajectoryTooShort(trajectory.len()));
    }
    if let Some(i) = trajectory
        .windows(2)
        .position(|w| w[1].time_index <= w[0].time_index)
    {
        return Err(Error::NonMonotonicTime(i + 1));
    }
    Ok(())
}

/// Settings fixed for the lifetime of a dataset and stored in its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub grid: GridSpec,
    pub parser: SkillParser,
    pub spacing: f64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            parser: SkillParser::default(),
            spacing: DEFAULT_SPACING,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    config: StoreConfig,
    demos: BTreeMap<String, Demonstration>,
    skill_index: BTreeMap<String, BTreeSet<String>>,
}

impl Dataset {
    pub fn new(config: StoreConfig) -> Result<Self> {
        config.grid.validate()?;
        if !(config.spacing.is_finite() && config.spacing > 0.0) {
            return Err(Error::InvalidSpacing(config.spacing));
        }
        Ok(Self {
            config,
            demos: BTreeMap::new(),
            skill_index: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.config.grid
    }

    pub fn parser(&self) -> &SkillParser {
        &self.config.parser
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Demonstration> {
        self.demos.get(id)
    }

    pub fn demos(&self) -> impl Iterator<Item = &Demonstration> {
        self.demos.values()
    }

    pub fn skill_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.skill_index
    }

    pub fn ids_for_skill(&self, skill: &str) -> Option<&BTreeSet<String>> {
        self.skill_index.get(skill)
    }

    /// Builds the stored form of a recording without inserting it.
    pub fn prepare(&self, input: DemoInput) -> Result<Demonstration> {
        validate_id(&input.id)?;
        let micro_skill = self.config.parser.parse(&input.description)?;
        input.object_cloud.ensure_non_empty()?;
        validate_trajectory(&input.trajectory)?;
        let trajectory = resample_trajectory(&input.trajectory, self.config.spacing)?;
        let embedding = occupancy_embedding(&input.object_cloud, &self.config.grid)?;
        Ok(Demonstration {
            id: input.id,
            description: input.description.trim().to_string(),
            micro_skill,
            object_cloud: input.object_cloud,
            trajectory,
            embedding,
            object_instance_id: input.object_instance_id,
            object_pose: input.object_pose,
        })
    }

    /// Prepares and inserts a recording. Re-ingesting identical input under
    /// the same id is a no-op; different content under an existing id fails.
    pub fn ingest(&mut self, input: DemoInput) -> Result<&Demonstration> {
        let demo = self.prepare(input)?;
        self.insert(demo)
    }

    pub fn insert(&mut self, demo: Demonstration) -> Result<&Demonstration> {
        validate_id(&demo.id)?;
        if let Some(existing) = self.demos.get(&demo.id) {
            if *existing != demo {
                return Err(Error::DuplicateId(demo.id));
            }
            return Ok(&self.demos[&demo.id]);
        }
        if demo.embedding.grid() != &self.config.grid {
            return Err(Error::GridMismatch);
        }
        self.skill_index
            .entry(demo.micro_skill.clone())
            .or_default()
            .insert(demo.id.clone());
        let id = demo.id.clone();
        self.demos.insert(id.clone(), demo);
        Ok(&self.demos[&id])
    }

    /// Checks that the skill index partitions the demo ids exactly.
    pub fn check_index(&self) -> bool {
        let mut seen = BTreeSet::new();
        for (skill, ids) in &self.skill_index {
            if ids.is_empty() {
                return false;
            }
            for id in ids {
                match self.demos.get(id) {
                    Some(d) if &d.micro_skill == skill && seen.insert(id.clone()) => {}
                    _ => return false,
                }
            }
        }
        seen.len() == self.demos.len()
    }
}
