//! Shared fixtures for the benchmarks.

use mt3_core::sim::{generate, randomize_scene, record_demo, Category, RenderSpec, SceneMode, SceneSpec, TaskSpec};
use mt3_core::store::Dataset;
use mt3_core::PointCloud;

/// A scene of `category` and its observed cloud.
pub fn observed(category: Category, instance_seed: u64, scene_seed: u64) -> (SceneSpec, PointCloud) {
    let task = TaskSpec::for_category(category);
    let scene = randomize_scene(&task, &generate(category, instance_seed), SceneMode::Controlled, scene_seed);
    let cloud = scene.observe(&RenderSpec::default()).expect("object in view");
    (scene, cloud)
}

/// `per_family` scripted demonstrations of every family.
pub fn dataset(per_family: usize) -> Dataset {
    let mut ds = Dataset::default();
    for category in Category::ALL {
        let task = TaskSpec::for_category(category);
        for i in 0..per_family as u64 {
            let scene = randomize_scene(&task, &generate(category, i), SceneMode::Controlled, 1000 + i);
            let input = record_demo(&task, &scene, &format!("{category}-{i}"), &RenderSpec::default()).expect("renders");
            ds.ingest(input).expect("unique ids");
        }
    }
    ds
}
