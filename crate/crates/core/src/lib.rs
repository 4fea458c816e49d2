//! Geometry-aware retrieval and trajectory transfer for one-shot manipulation.

pub mod embedding;
pub mod error;
pub mod kdtree;
pub mod policies;
pub mod registration;
pub mod retrieval;
pub mod rng;
pub mod se3;
pub mod sim;
pub mod stats;
pub mod store;

pub use embedding::{cosine_similarity, occupancy_embedding, GeometryEmbedding, GridSpec, Splat};
pub use error::{Error, Result};
pub use se3::{Frame, PointCloud, Pose, RelativeMotion, Vec3};
pub use store::{Dataset, DemoInput, Demonstration, EndEffectorState, Gripper, StoreConfig};
pub use registration::{estimate_delta, RegistrationResult};
pub use retrieval::{hierarchical_retrieve, RetrievalResult};
