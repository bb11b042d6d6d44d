//! Synthetic scenes, camera paths and actors with exact ground truth, and the
//! brute-force oracles the fast paths are checked against.

pub mod actor;
pub mod fixture;
pub mod oracle;
pub mod scene;
pub mod trajectory;

pub use actor::{generate_actor, ActorParams, SyntheticActor};
pub use fixture::{generate_fixture, Fixture, FixtureParams};
pub use oracle::{oracle_splat, oracle_voxel_pool, OracleVoxel, UNASSIGNED};
pub use scene::{generate_scene, generate_scene_with, SceneDataset, SceneParams, SyntheticScene};
pub use trajectory::{generate_trajectory, MotionProfile, TrajectoryParams};
