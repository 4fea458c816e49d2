//! Embedding-structure probe: how strongly the occupancy descriptor clusters
//! scenes by instance and by category once placement is held roughly fixed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objects::{generate, Category};
use super::render::RenderSpec;
use super::scene::{randomize_scene, SceneMode, TaskSpec};
use crate::embedding::{cosine_similarity, occupancy_embedding, GeometryEmbedding, GridSpec};
use crate::error::Result;
use crate::rng::{derive_path, rng};
use crate::se3::{Pose, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementJitter {
    /// Shared placement every scene of a triple is jittered around.
    pub center: [f64; 2],
    /// Half-range of the shared yaw, radians.
    pub yaw_range: f64,
    /// Independent per-scene jitter: metres, radians.
    pub translation: f64,
    pub rotation: f64,
}

impl Default for PlacementJitter {
    fn default() -> Self {
        Self {
            center: [0.7, 0.0],
            yaw_range: SceneMode::Thousand.rotation_range(),
            translation: 0.01,
            rotation: 10f64.to_radians(),
        }
    }
}

/// Mean cosine similarities over the probed pairs of one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStructure {
    pub category: Category,
    pub pairs: usize,
    pub intra_instance: f64,
    pub intra_category: f64,
    pub cross_category: f64,
}

impl EmbeddingStructure {
    pub fn instance_gap(&self) -> f64 {
        self.intra_instance - self.intra_category
    }

    pub fn category_gap(&self) -> f64 {
        self.intra_category - self.cross_category
    }
}

/// For each of `pairs` triples, four scenes share one placement up to
/// independent jitter: instance A twice, another instance of the same family,
/// and an instance of a different family. Returns the mean similarity of
/// A/A, A/same-family and A/other-family.
pub fn embedding_structure(
    category: Category,
    pairs: usize,
    jitter: &PlacementJitter,
    grid: &GridSpec,
    render: &RenderSpec,
    seed: u64,
) -> Result<EmbeddingStructure> {
    let ci = Category::ALL.iter().position(|c| *c == category).unwrap_or(0) as u64;
    let sims: Vec<(f64, f64, f64)> = (0..pairs as u64)
        .into_par_iter()
        .map(|i| {
            let s = |k: u64| derive_path(seed, &[ci, i, k]);
            let other = Category::ALL[((ci + 1 + i % 5) % 6) as usize];
            let a = generate(category, s(0));
            let b = generate(category, s(1));
            let c = generate(other, s(2));
            let base_yaw = rng(s(3)).random_range(-jitter.yaw_range..=jitter.yaw_range);
            let embed = |inst: &super::objects::ObjectInstance, k: u64| -> Result<GeometryEmbedding> {
                let mut r = rng(s(10 + k));
                let dx = r.random_range(-jitter.translation..=jitter.translation);
                let dy = r.random_range(-jitter.translation..=jitter.translation);
                let dyaw = r.random_range(-jitter.rotation..=jitter.rotation);
                let mut scene = randomize_scene(&TaskSpec::for_category(inst.category), inst, SceneMode::Controlled, s(20 + k));
                scene.object_pose = Pose::from_translation(Vec3::new(jitter.center[0] + dx, jitter.center[1] + dy, 0.0))
                    .compose(&Pose::rz(base_yaw + dyaw));
                occupancy_embedding(&scene.observe(render)?, grid)
            };
            let (a1, a2, b1, c1) = (embed(&a, 0)?, embed(&a, 1)?, embed(&b, 2)?, embed(&c, 3)?);
            Ok((
                cosine_similarity(&a1, &a2)?,
                cosine_similarity(&a1, &b1)?,
                cosine_similarity(&a1, &c1)?,
            ))
        })
        .collect::<Result<_>>()?;
    let n = sims.len().max(1) as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| sims.iter().map(f).sum::<f64>() / n;
    Ok(EmbeddingStructure {
        category,
        pairs,
        intra_instance: mean(|t| t.0),
        intra_category: mean(|t| t.1),
        cross_category: mean(|t| t.2),
    })
}
