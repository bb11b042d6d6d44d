//! Smooth synthetic camera paths.

use std::f64::consts::TAU;
use std::str::FromStr;

use egomem_core::geometry::{look_at, PoseSE3, Vec3};
use egomem_core::trajectory::CameraTrajectory;
use egomem_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionProfile {
    /// Circle around `center`, always looking at it.
    Orbit,
    /// Straight walk with a slow sideways pan.
    Walk,
    /// Walk plus vertical bobbing and random yaw jitter.
    HeadBob,
}

impl FromStr for MotionProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orbit" => Ok(Self::Orbit),
            "walk" => Ok(Self::Walk),
            "head-bob" => Ok(Self::HeadBob),
            other => Err(Error::InvalidInput(format!(
                "unknown motion profile `{other}` (expected orbit, walk or head-bob)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryParams {
    pub center: [f64; 3],
    /// Orbit radius; walks run along a line `radius / 2` off the center.
    pub radius: f64,
    pub height: f64,
    /// Height of the orbit look-at point.
    pub look_height: f64,
    /// Total orbit angle (radians), split evenly over `n` frames.
    pub arc: f64,
    pub walk_length: f64,
    /// Downward tilt of walking cameras (radians).
    pub pitch: f64,
    /// Peak sideways pan of walking cameras (radians).
    pub pan: f64,
    pub bob_amplitude: f64,
    /// Frames per bob cycle.
    pub bob_period: f64,
    /// Side-to-side gait displacement while walking, meters.
    pub lateral_sway: f64,
    pub yaw_jitter_deg: f64,
    /// Upper bound on the rotation between consecutive walking poses.
    pub max_step_deg: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            center: [0.0; 3],
            radius: 1.2,
            height: 1.5,
            look_height: 0.5,
            arc: TAU,
            walk_length: 1.6,
            pitch: 0.35,
            pan: 0.3,
            bob_amplitude: 0.03,
            bob_period: 8.0,
            lateral_sway: 0.02,
            yaw_jitter_deg: 1.5,
            max_step_deg: 5.0,
        }
    }
}

const UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);

fn orbit(n: usize, p: &TrajectoryParams) -> Result<Vec<PoseSE3>> {
    let c = Vec3::from(p.center);
    let target = c + Vec3::new(0.0, 0.0, p.look_height);
    (0..n)
        .map(|i| {
            let theta = p.arc * i as f64 / n as f64;
            let eye = c + Vec3::new(p.radius * theta.cos(), p.radius * theta.sin(), p.height);
            Ok(PoseSE3 {
                rotation: look_at(&eye, &target, &UP)?,
                translation: eye,
            })
        })
        .collect()
}

fn walk(seed: u64, n: usize, p: &TrajectoryParams, bob: bool) -> Result<Vec<PoseSE3>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB0B);
    let c = Vec3::from(p.center);
    let max_step = p.max_step_deg.to_radians();
    let mut yaw_prev = 0.0;
    (0..n)
        .map(|i| {
            let s = if n > 1 {
                i as f64 / (n - 1) as f64
            } else {
                0.0
            };
            let mut eye = c + Vec3::new(
                -p.walk_length / 2.0 + p.walk_length * s,
                -p.radius / 2.0,
                p.height,
            );
            // One side-to-side cycle per two steps keeps the path off a single line.
            eye.y += p.lateral_sway * (TAU * i as f64 / (2.0 * p.bob_period)).sin();
            let mut yaw = p.pan * (TAU * s).sin();
            if bob {
                eye.z += p.bob_amplitude * (TAU * i as f64 / p.bob_period).sin();
                yaw += rng.random_range(-1.0..=1.0) * p.yaw_jitter_deg.to_radians();
            }
            if i > 0 {
                yaw = yaw_prev + (yaw - yaw_prev).clamp(-max_step, max_step);
            }
            yaw_prev = yaw;
            let dir = Vec3::new(
                yaw.cos() * p.pitch.cos(),
                yaw.sin() * p.pitch.cos(),
                -p.pitch.sin(),
            );
            Ok(PoseSE3 {
                rotation: look_at(&eye, &(eye + dir), &UP)?,
                translation: eye,
            })
        })
        .collect()
}

/// `n` camera-to-world poses with frame ids `0..n`.
pub fn generate_trajectory(
    seed: u64,
    n: usize,
    profile: MotionProfile,
    params: &TrajectoryParams,
) -> Result<CameraTrajectory> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "trajectory needs at least one frame".into(),
        ));
    }
    let poses = match profile {
        MotionProfile::Orbit => orbit(n, params)?,
        MotionProfile::Walk => walk(seed, n, params, false)?,
        MotionProfile::HeadBob => walk(seed, n, params, true)?,
    };
    Ok(CameraTrajectory::from_poses(poses))
}
