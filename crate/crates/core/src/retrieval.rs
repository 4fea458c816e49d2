//! Hierarchical retrieval: language filter to the micro skill, then the
//! demonstration whose object embedding is most similar to the test object.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, occupancy_embedding};
use crate::error::{Error, Result};
use crate::se3::{Frame, PointCloud};
use crate::store::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub demo_id: String,
    pub similarity: f64,
    pub candidate_count: usize,
    /// Best minus second-best similarity; 0 with a single candidate.
    pub runner_up_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDemo {
    pub demo_id: String,
    pub similarity: f64,
}

/// Ids of every demonstration whose micro skill matches the description.
pub fn language_filter(dataset: &Dataset, description: &str) -> Result<Vec<String>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let skill = dataset.parser().parse(description)?;
    dataset
        .ids_for_skill(&skill)
        .map(|ids| ids.iter().cloned().collect())
        .ok_or(Error::UnknownSkill(skill))
}

/// Descending similarity, then ascending id.
fn rank_order(a: &ScoredDemo, b: &ScoredDemo) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.demo_id.cmp(&b.demo_id))
}

/// Every candidate for the skill, scored and sorted best first.
pub fn rank_candidates(
    dataset: &Dataset,
    description: &str,
    test_cloud: &PointCloud,
) -> Result<Vec<ScoredDemo>> {
    let ids = language_filter(dataset, description)?;
    test_cloud.ensure_non_empty()?;
    test_cloud.ensure_frame(Frame::Robot)?;
    let query = occupancy_embedding(test_cloud, dataset.grid())?;
    let mut scored = ids
        .into_par_iter()
        .map(|id| {
            let demo = dataset.get(&id).expect("indexed id present");
            let s = cosine_similarity(&query, &demo.embedding)?;
            // occupancy values are non-negative, so only rounding can dip below 0
            Ok(ScoredDemo {
                demo_id: id,
                similarity: s.clamp(0.0, 1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(rank_order);
    Ok(scored)
}

pub fn hierarchical_retrieve(
    dataset: &Dataset,
    description: &str,
    test_cloud: &PointCloud,
) -> Result<RetrievalResult> {
    let ranked = rank_candidates(dataset, description, test_cloud)?;
    let best = &ranked[0];
    let margin = ranked
        .get(1)
        .map_or(0.0, |second| (best.similarity - second.similarity).max(0.0));
    Ok(RetrievalResult {
        demo_id: best.demo_id.clone(),
        similarity: best.similarity,
        candidate_count: ranked.len(),
        runner_up_margin: margin,
    })
}
