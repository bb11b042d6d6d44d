//! A complete on-disk synthetic dataset for the pipeline.

use std::path::Path;

use egomem_core::geometry::{axis_angle, sim3_apply, Sim3, Vec3};
use egomem_core::image::write_video;
use egomem_core::io::write_json;
use egomem_core::memory::{write_observations_csv, write_points_csv};
use egomem_core::metrics::{write_detections, write_masks, DetectionFrame, MaskSequence};
use egomem_core::trajectory::{write_intrinsics, CameraTrajectory};
use egomem_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor::{
    exo_detections, generate_actor, hand_masks, object_detections, ActorParams, SyntheticActor,
};
use crate::scene::{generate_scene_with, AaBox, SceneDataset, SceneParams};
use crate::trajectory::{generate_trajectory, MotionProfile, TrajectoryParams};

pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const POINTS_FILE: &str = "points.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const CONTEXT_TRAJ_FILE: &str = "context_traj.csv";
pub const CONTEXT_DIR: &str = "context";
pub const CONTEXT_FEATS_FILE: &str = "context_feats.bin";
pub const TARGET_TRAJ_FILE: &str = "target_traj.csv";
pub const EST_TRAJ_FILE: &str = "est_traj.csv";
pub const EGO_FILE: &str = "ego.json";
pub const EXO_FILE: &str = "exo.json";
pub const GT_OBJECTS_FILE: &str = "gt_objects.json";
pub const GT_EXO_FILE: &str = "gt_exo.json";
pub const GT_HANDS_FILE: &str = "gt_hands.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureParams {
    pub scene: SceneParams,
    pub targets: usize,
    pub profile: MotionProfile,
    pub trajectory: TrajectoryParams,
    pub exo_people: usize,
    /// Hand disk radius in pixels; 0 picks `width / 5`.
    pub hand_radius: usize,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            scene: SceneParams::default(),
            targets: 16,
            profile: MotionProfile::HeadBob,
            trajectory: TrajectoryParams::default(),
            exo_people: 1,
            hand_radius: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub seed: u64,
    pub params: FixtureParams,
    pub dataset: SceneDataset,
    pub target: CameraTrajectory,
    /// `target` mapped through `est_from_gt`.
    pub estimated: CameraTrajectory,
    pub est_from_gt: Sim3,
    pub actor: SyntheticActor,
    pub gt_objects: Vec<DetectionFrame>,
    pub gt_exo: Vec<DetectionFrame>,
    pub gt_hands: MaskSequence,
}

#[derive(Serialize)]
struct PointTruth<'a> {
    uid: u64,
    position: [f64; 3],
    color: [f32; 3],
    descriptor: &'a [f64],
}

#[derive(Serialize)]
struct SimilarityTruth {
    scale: f64,
    /// Row-major 3x3.
    rotation: [f64; 9],
    translation: [f64; 3],
}

#[derive(Serialize)]
struct GroundTruth<'a> {
    seed: u64,
    params: &'a FixtureParams,
    room: AaBox,
    objects: &'a [AaBox],
    est_from_gt: SimilarityTruth,
    points: Vec<PointTruth<'a>>,
}

fn random_sim3(rng: &mut ChaCha8Rng) -> Result<Sim3> {
    let axis = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(0.1..1.0),
    );
    Sim3::new(
        rng.random_range(0.5..2.0),
        axis_angle(axis, rng.random_range(-3.0..3.0)),
        Vec3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ),
    )
}

pub fn generate_fixture(seed: u64, params: &FixtureParams) -> Result<Fixture> {
    if params.targets == 0 {
        return Err(Error::InvalidInput("need at least one target frame".into()));
    }
    let dataset = generate_scene_with(seed, &params.scene)?;
    let target = generate_trajectory(seed, params.targets, params.profile, &params.trajectory)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51A3);
    let est_from_gt = random_sim3(&mut rng)?;
    let estimated = CameraTrajectory::new(
        target.frames().to_vec(),
        target
            .poses()
            .iter()
            .map(|p| sim3_apply(&est_from_gt, p))
            .collect(),
    )?;
    let intr = dataset.intrinsics;
    let actor = generate_actor(
        seed,
        &dataset.scene,
        &target,
        &intr,
        &ActorParams {
            exo_people: params.exo_people,
            ..ActorParams::default()
        },
    )?;
    let radius = if params.hand_radius == 0 {
        intr.width / 5
    } else {
        params.hand_radius
    };
    Ok(Fixture {
        seed,
        params: params.clone(),
        gt_objects: object_detections(&dataset.scene, &target, &intr),
        gt_exo: exo_detections(&actor.exo),
        gt_hands: hand_masks(&actor.ego, &intr, radius),
        dataset,
        target,
        estimated,
        est_from_gt,
        actor,
    })
}

impl Fixture {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ds = &self.dataset;
        write_intrinsics(&dir.join(INTRINSICS_FILE), &ds.intrinsics)?;
        write_points_csv(&dir.join(POINTS_FILE), &ds.points)?;
        write_observations_csv(&dir.join(OBSERVATIONS_FILE), &ds.observations)?;
        ds.context.write_csv(&dir.join(CONTEXT_TRAJ_FILE))?;
        write_video(&dir.join(CONTEXT_DIR), &ds.frames)?;
        if let Some(f) = &ds.features {
            f.write(&dir.join(CONTEXT_FEATS_FILE))?;
        }
        self.target.write_csv(&dir.join(TARGET_TRAJ_FILE))?;
        self.estimated.write_csv(&dir.join(EST_TRAJ_FILE))?;
        self.actor.ego.write(&dir.join(EGO_FILE))?;
        self.actor.exo.write(&dir.join(EXO_FILE))?;
        write_detections(&dir.join(GT_OBJECTS_FILE), &self.gt_objects)?;
        write_detections(&dir.join(GT_EXO_FILE), &self.gt_exo)?;
        write_masks(&dir.join(GT_HANDS_FILE), &self.gt_hands)?;

        let r = self.est_from_gt.rotation;
        let t = self.est_from_gt.translation;
        let truth = GroundTruth {
            seed: self.seed,
            params: &self.params,
            room: ds.scene.room,
            objects: &ds.scene.objects,
            est_from_gt: SimilarityTruth {
                scale: self.est_from_gt.scale,
                rotation: std::array::from_fn(|k| r[(k / 3, k % 3)]),
                translation: [t.x, t.y, t.z],
            },
            points: ds
                .points
                .iter()
                .zip(&ds.colors)
                .zip(&ds.descriptors)
                .map(|(((uid, p), c), d)| PointTruth {
                    uid: *uid,
                    position: [p.x, p.y, p.z],
                    color: *c,
                    descriptor: d,
                })
                .collect(),
        };
        write_json(&dir.join(GROUND_TRUTH_FILE), &truth)
    }
}
