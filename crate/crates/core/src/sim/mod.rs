//! Synthetic tabletop world: parametric objects, a virtual depth camera,
//! randomized scenes, full-pipeline rollouts and failure attribution.

mod bench;
mod objects;
mod render;
mod rollout;
mod scene;

pub use objects::{
    anchor, generate, generate_object, instance_id, parse_instance_id, shape_params, Category,
    ObjectInstance, Symmetry, SURFACE_POINTS,
};
pub use bench::{embedding_structure, EmbeddingStructure, PlacementJitter};
pub use render::{default_camera, hidden_point_removal, render_partial_cloud, RenderSpec};
pub use rollout::{
    classify_failure, delta_error, demo_truth, gripper_schedule, run_rollout, succeeds_under_gt,
    transfer_error, DemoTruth, FailureClass, RolloutOptions, RolloutResult,
};
pub use scene::{
    random_object_pose, randomize_scene, record_demo, SceneMode, SceneSpec, TaskSpec, Tolerance,
    Workspace,
};
