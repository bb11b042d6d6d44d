//! Stick-figure actors: the camera wearer's body in the head-camera frame and
//! other people walking in the world, projected into the target views.

use egomem_core::geometry::{axis_angle, PinholeIntrinsics, PoseSE3, Vec3};
use egomem_core::metrics::{DetectionFrame, MaskFrame, MaskSequence};
use egomem_core::pose::{EgoPoseSequence, ExoPerson, ExoPoseSequence};
use egomem_core::trajectory::CameraTrajectory;
use egomem_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scene::SyntheticScene;

pub const EGO_HEAD: usize = 6;
pub const EGO_PELVIS: usize = 0;
pub const LEFT_HAND: usize = 10;
pub const RIGHT_HAND: usize = 14;

/// Rest pose of the 23-joint body in the head camera frame (`+y` down,
/// `+z` forward).
const EGO_REST: [[f64; 3]; 23] = [
    [0.0, 0.75, 0.15],
    [0.0, 0.60, 0.14],
    [0.0, 0.45, 0.13],
    [0.0, 0.32, 0.12],
    [0.0, 0.20, 0.10],
    [0.0, 0.12, 0.08],
    [0.0, 0.02, 0.06],
    [-0.18, 0.22, 0.10],
    [-0.22, 0.42, 0.22],
    [-0.20, 0.38, 0.42],
    [-0.16, 0.35, 0.50],
    [0.18, 0.22, 0.10],
    [0.22, 0.42, 0.22],
    [0.20, 0.38, 0.42],
    [0.16, 0.35, 0.50],
    [-0.10, 0.78, 0.15],
    [-0.10, 1.20, 0.20],
    [-0.10, 1.60, 0.15],
    [-0.10, 1.65, 0.30],
    [0.10, 0.78, 0.15],
    [0.10, 1.20, 0.20],
    [0.10, 1.60, 0.15],
    [0.10, 1.65, 0.30],
];

/// COCO-17 rest pose in a person frame (`+z` up, facing `+x`), meters.
const EXO_REST: [[f64; 3]; 17] = [
    [0.10, 0.00, 1.65],
    [0.08, 0.04, 1.68],
    [0.08, -0.04, 1.68],
    [0.02, 0.08, 1.66],
    [0.02, -0.08, 1.66],
    [0.00, 0.20, 1.42],
    [0.00, -0.20, 1.42],
    [0.02, 0.26, 1.12],
    [0.02, -0.26, 1.12],
    [0.06, 0.27, 0.86],
    [0.06, -0.27, 0.86],
    [0.00, 0.12, 0.95],
    [0.00, -0.12, 0.95],
    [0.02, 0.12, 0.50],
    [0.02, -0.12, 0.50],
    [0.00, 0.12, 0.06],
    [0.00, -0.12, 0.06],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorParams {
    /// Peak joint sway around the rest pose (meters).
    pub sway: f64,
    /// Sway angular rate (radians per frame).
    pub rate: f64,
    pub exo_people: usize,
    /// Walking speed of exo people (meters per frame).
    pub exo_speed: f64,
    /// Keypoints with at least this many visible joints form a detection.
    pub min_visible: usize,
}

impl Default for ActorParams {
    fn default() -> Self {
        Self {
            sway: 0.04,
            rate: 0.35,
            exo_people: 1,
            exo_speed: 0.02,
            min_visible: 3,
        }
    }
}

impl ActorParams {
    /// Bound on any ego joint's displacement between consecutive frames.
    pub fn max_joint_step(&self) -> f64 {
        // Each axis moves at most sway * rate per frame.
        self.sway * self.rate * 3f64.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticActor {
    pub ego: EgoPoseSequence,
    /// World keypoints per frame, per exo person.
    pub exo_world: Vec<Vec<Vec<Vec3>>>,
    pub exo: ExoPoseSequence,
}

fn ego_sequence(rng: &mut ChaCha8Rng, n: usize, p: &ActorParams) -> Result<EgoPoseSequence> {
    let phases: Vec<[f64; 3]> = (0..EGO_REST.len())
        .map(|_| std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let axes = [
        Vec3::new(
            rng.random_range(-1.0..1.0),
            1.0,
            rng.random_range(-1.0..1.0),
        ),
        Vec3::new(
            rng.random_range(-1.0..1.0),
            1.0,
            rng.random_range(-1.0..1.0),
        ),
    ];
    let mut joints = Vec::with_capacity(n);
    let mut wrists = Vec::with_capacity(n);
    for t in 0..n {
        let s = p.rate * t as f64;
        let frame: Vec<Vec3> = EGO_REST
            .iter()
            .zip(&phases)
            .enumerate()
            .map(|(j, (r, ph))| {
                // The head joint stays fixed under the camera.
                let amp = if j == EGO_HEAD { 0.0 } else { p.sway };
                Vec3::new(
                    r[0] + amp * (s + ph[0]).sin(),
                    r[1] + amp * (s + ph[1]).sin(),
                    r[2] + amp * (s + ph[2]).sin(),
                )
            })
            .collect();
        let wrist = |hand: usize, k: usize| PoseSE3 {
            rotation: axis_angle(axes[k], 0.4 * (s + phases[hand][0]).sin()),
            translation: frame[hand],
        };
        wrists.push([wrist(LEFT_HAND, 0), wrist(RIGHT_HAND, 1)]);
        joints.push(frame);
    }
    EgoPoseSequence::new(joints, wrists, EGO_HEAD, EGO_PELVIS)
}

/// Projects world keypoints into a view; invisible keypoints get confidence 0
/// and coordinates (0, 0).
pub fn project_keypoints(
    world: &[Vec3],
    pose: &PoseSE3,
    intr: &PinholeIntrinsics,
) -> Vec<[f64; 3]> {
    world
        .iter()
        .map(|p| match intr.project(&pose.world_to_camera(p)) {
            Some(q) => [q.u, q.v, 1.0],
            None => [0.0, 0.0, 0.0],
        })
        .collect()
}

/// Ego body motion for `target.len()` frames plus exo people walking across
/// the room, seen from `target`.
pub fn generate_actor(
    seed: u64,
    scene: &SyntheticScene,
    target: &CameraTrajectory,
    intr: &PinholeIntrinsics,
    params: &ActorParams,
) -> Result<SyntheticActor> {
    if target.is_empty() {
        return Err(Error::InvalidInput(
            "actor needs at least one target frame".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xAC7);
    let n = target.len();
    let ego = ego_sequence(&mut rng, n, params)?;

    let reach = [0.7 * scene.room.max[0], 0.7 * scene.room.max[1]];
    let floor = scene.room.min[2];
    let walkers: Vec<(Vec3, f64)> = (0..params.exo_people)
        .map(|_| {
            let start = Vec3::new(
                rng.random_range(-reach[0]..reach[0]),
                rng.random_range(-reach[1]..reach[1]),
                floor,
            );
            (start, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let mut exo_world = Vec::with_capacity(n);
    let mut exo_frames = Vec::with_capacity(n);
    for (t, pose) in target.poses().iter().enumerate() {
        let mut world_people = Vec::with_capacity(walkers.len());
        let mut people = Vec::new();
        for (k, (start, heading)) in walkers.iter().enumerate() {
            let dir = Vec3::new(heading.cos(), heading.sin(), 0.0);
            let root = start + dir * (params.exo_speed * t as f64);
            let rot = axis_angle(Vec3::z(), *heading);
            let swing = 0.1 * (0.5 * t as f64).sin();
            let kps: Vec<Vec3> = EXO_REST
                .iter()
                .enumerate()
                .map(|(j, r)| {
                    let mut local = Vec3::new(r[0], r[1], r[2]);
                    if (9..=10).contains(&j) || (15..=16).contains(&j) {
                        local.x += if j % 2 == 1 { swing } else { -swing };
                    }
                    root + rot * local
                })
                .collect();
            let projected = project_keypoints(&kps, pose, intr);
            if projected.iter().filter(|k| k[2] > 0.0).count() >= params.min_visible {
                people.push(ExoPerson {
                    id: k as i64 + 1,
                    keypoints: projected,
                });
            }
            world_people.push(kps);
        }
        exo_world.push(world_people);
        exo_frames.push(people);
    }
    Ok(SyntheticActor {
        ego,
        exo_world,
        exo: ExoPoseSequence { frames: exo_frames },
    })
}

/// Tight boxes around the visible keypoints of each exo person.
pub fn exo_detections(exo: &ExoPoseSequence) -> Vec<DetectionFrame> {
    exo.frames
        .iter()
        .map(|people| {
            let mut frame = DetectionFrame::from_boxes(Vec::new());
            let mut kps = Vec::new();
            for person in people {
                let vis: Vec<&[f64; 3]> = person.keypoints.iter().filter(|k| k[2] > 0.0).collect();
                if vis.is_empty() {
                    continue;
                }
                let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
                for k in vis {
                    x0 = x0.min(k[0]);
                    y0 = y0.min(k[1]);
                    x1 = x1.max(k[0]);
                    y1 = y1.max(k[1]);
                }
                frame.boxes.push([x0, y0, x1, y1]);
                frame.scores.push(1.0);
                kps.push(person.keypoints.clone());
            }
            frame.keypoints = Some(kps);
            frame
        })
        .collect()
}

/// Image-space boxes of scene objects fully in front of the camera, clipped
/// to the image; objects whose clipped box is empty are skipped.
pub fn object_detections(
    scene: &SyntheticScene,
    target: &CameraTrajectory,
    intr: &PinholeIntrinsics,
) -> Vec<DetectionFrame> {
    let (w, h) = (intr.width as f64, intr.height as f64);
    target
        .poses()
        .iter()
        .map(|pose| {
            let mut frame = DetectionFrame::from_boxes(Vec::new());
            let mut labels = Vec::new();
            for (i, obj) in scene.objects.iter().enumerate() {
                let cam: Vec<Vec3> = obj
                    .corners()
                    .iter()
                    .map(|c| pose.world_to_camera(c))
                    .collect();
                if cam.iter().any(|c| c.z <= 0.05) {
                    continue;
                }
                let uv: Vec<(f64, f64)> = cam
                    .iter()
                    .map(|c| (intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy))
                    .collect();
                let x0 = uv
                    .iter()
                    .map(|p| p.0)
                    .fold(f64::MAX, f64::min)
                    .clamp(0.0, w);
                let x1 = uv
                    .iter()
                    .map(|p| p.0)
                    .fold(f64::MIN, f64::max)
                    .clamp(0.0, w);
                let y0 = uv
                    .iter()
                    .map(|p| p.1)
                    .fold(f64::MAX, f64::min)
                    .clamp(0.0, h);
                let y1 = uv
                    .iter()
                    .map(|p| p.1)
                    .fold(f64::MIN, f64::max)
                    .clamp(0.0, h);
                if x1 > x0 && y1 > y0 {
                    frame.boxes.push([x0, y0, x1, y1]);
                    frame.scores.push(1.0);
                    labels.push(format!("object{i}"));
                }
            }
            frame.labels = Some(labels);
            frame
        })
        .collect()
}

/// Filled disks of `radius` pixels at the projected hand positions.
pub fn hand_masks(ego: &EgoPoseSequence, intr: &PinholeIntrinsics, radius: usize) -> MaskSequence {
    let (w, h) = (intr.width, intr.height);
    let r = radius as i64;
    let frames = ego
        .wrists
        .iter()
        .map(|pair| {
            let mut m = MaskFrame::empty(h, w);
            for wrist in pair {
                let Some(q) = intr.project(&wrist.translation) else {
                    continue;
                };
                let (cx, cy) = (q.u.floor() as i64, q.v.floor() as i64);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (x, y) = (cx + dx, cy + dy);
                        if dx * dx + dy * dy <= r * r
                            && x >= 0
                            && y >= 0
                            && (x as usize) < w
                            && (y as usize) < h
                        {
                            m.data[y as usize * w + x as usize] = true;
                        }
                    }
                }
            }
            m
        })
        .collect();
    MaskSequence {
        height: h,
        width: w,
        frames,
    }
}
