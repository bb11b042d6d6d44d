//! Box-room scenes with piecewise-constant per-voxel colors, ray-cast context
//! frames and semi-dense points whose observations sample those frames exactly.

use std::collections::BTreeSet;

use egomem_core::features::FeatureVideo;
use egomem_core::geometry::{PinholeIntrinsics, PoseSE3, Vec3};
use egomem_core::image::RgbImage;
use egomem_core::memory::{
    ObservationRecord, DEFAULT_FEATURE_STRIDE, DEFAULT_VOXEL_SIZE_FEAT, DEFAULT_VOXEL_SIZE_RGB,
};
use egomem_core::trajectory::CameraTrajectory;
use egomem_core::{Error, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trajectory::{generate_trajectory, MotionProfile, TrajectoryParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AaBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl AaBox {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|k| {
            Vec3::new(
                if k & 1 == 0 { self.min[0] } else { self.max[0] },
                if k & 2 == 0 { self.min[1] } else { self.max[1] },
                if k & 4 == 0 { self.min[2] } else { self.max[2] },
            )
        })
    }

    /// Slab test: `(t_enter, t_exit)` of the ray against the box, if any.
    fn slab(&self, o: &Vec3, d: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            if d[i] == 0.0 {
                if o[i] < self.min[i] || o[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let a = (self.min[i] - o[i]) / d[i];
            let b = (self.max[i] - o[i]) / d[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    /// Half-width of the square room (meters); the room spans `[-e, e]` in x and y.
    pub extent: f64,
    pub room_height: f64,
    pub point_count: usize,
    pub context_frames: usize,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub objects: usize,
    pub voxel_size_rgb: f32,
    pub voxel_size_feat: f32,
    pub feat_dim: usize,
    pub stride: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            extent: 2.0,
            room_height: 2.5,
            point_count: 20_000,
            context_frames: 8,
            width: 128,
            height: 128,
            fov_deg: 90.0,
            objects: 3,
            voxel_size_rgb: DEFAULT_VOXEL_SIZE_RGB,
            voxel_size_feat: DEFAULT_VOXEL_SIZE_FEAT,
            feat_dim: 16,
            stride: DEFAULT_FEATURE_STRIDE,
        }
    }
}

/// Square-pixel pinhole camera with the principal point at the image center.
pub fn intrinsics_for(width: usize, height: usize, fov_deg: f64) -> Result<PinholeIntrinsics> {
    let f = width as f64 / 2.0 / (fov_deg.to_radians() / 2.0).tan();
    PinholeIntrinsics::new(
        f,
        f,
        (width as f64 - 1.0) / 2.0,
        (height as f64 - 1.0) / 2.0,
        width,
        height,
    )
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn floor_index(p: &Vec3, size: f64) -> [i64; 3] {
    [0, 1, 2].map(|i| (p[i] / size).floor() as i64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    /// Inside of the room; every ray from within hits one of its walls.
    pub room: AaBox,
    pub objects: Vec<AaBox>,
    pub voxel_size_rgb: f32,
    pub voxel_size_feat: f32,
    pub feat_dim: usize,
}

impl SyntheticScene {
    /// Snaps `c` onto the center plane of its voxel layer, so surface points
    /// never straddle a voxel face.
    fn snap(c: f64, size: f64) -> f64 {
        ((c / size).floor() + 0.5) * size
    }

    pub fn new(seed: u64, params: &SceneParams) -> Result<Self> {
        if !(params.extent > 0.5) || !(params.room_height > 1.8) {
            return Err(Error::InvalidInput(
                "room must be at least 1x1x1.8 m".into(),
            ));
        }
        let vs = f64::from(params.voxel_size_rgb);
        if !(vs > 0.0) || !(params.voxel_size_feat > 0.0) {
            return Err(Error::InvalidInput("voxel sizes must be positive".into()));
        }
        let s = |c: f64| Self::snap(c, vs);
        let e = params.extent;
        let room = AaBox {
            min: [s(-e), s(-e), s(0.0)],
            max: [s(e), s(e), s(params.room_height)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE7E);
        let objects = (0..params.objects)
            .map(|_| {
                let half = [rng.random_range(0.15..0.4), rng.random_range(0.15..0.4)];
                let h = rng.random_range(0.3..0.9);
                let reach = 0.45 * e;
                let c = [
                    rng.random_range(-reach..reach),
                    rng.random_range(-reach..reach),
                ];
                AaBox {
                    min: [s(c[0] - half[0]), s(c[1] - half[1]), room.min[2]],
                    max: [s(c[0] + half[0]), s(c[1] + half[1]), s(h)],
                }
            })
            .collect();
        Ok(Self {
            seed,
            room,
            objects,
            voxel_size_rgb: params.voxel_size_rgb,
            voxel_size_feat: params.voxel_size_feat,
            feat_dim: params.feat_dim,
        })
    }

    /// Ground-truth color of an RGB voxel, on the 8-bit grid.
    pub fn color_of_index(&self, idx: [i64; 3]) -> [f32; 3] {
        let mut h = splitmix(self.seed);
        for v in idx {
            h = splitmix(h ^ v as u64);
        }
        [0, 8, 16].map(|shift| ((h >> shift) & 0xFF) as f32 / 255.0)
    }

    pub fn color_at(&self, p: &Vec3) -> [f32; 3] {
        self.color_of_index(floor_index(p, f64::from(self.voxel_size_rgb)))
    }

    /// Descriptor of the feature voxel containing `p`: smooth functions of the
    /// voxel center.
    pub fn descriptor_at(&self, p: &Vec3) -> Vec<f64> {
        let size = f64::from(self.voxel_size_feat);
        let c = floor_index(p, size).map(|i| (i as f64 + 0.5) * size);
        analytic_descriptor(c, self.feat_dim)
    }

    /// Nearest surface hit along `origin + t * dir`, `t > 0`.
    pub fn ray_cast(&self, origin: &Vec3, dir: &Vec3) -> Option<Vec3> {
        let mut best = self
            .room
            .slab(origin, dir)
            .map(|(_, t1)| t1)
            .filter(|&t| t > 0.0);
        for b in &self.objects {
            if let Some((t0, _)) = b.slab(origin, dir) {
                if t0 > 0.0 && best.is_none_or(|t| t0 < t) {
                    best = Some(t0);
                }
            }
        }
        best.map(|t| origin + dir * t)
    }

    fn pixel_ray(pose: &PoseSE3, intr: &PinholeIntrinsics, u: f64, v: f64) -> Vec3 {
        pose.rotation * Vec3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0)
    }

    /// Surface point seen through continuous pixel coordinate `(u, v)`.
    pub fn hit_through(
        &self,
        pose: &PoseSE3,
        intr: &PinholeIntrinsics,
        u: f64,
        v: f64,
    ) -> Option<Vec3> {
        self.ray_cast(&pose.translation, &Self::pixel_ray(pose, intr, u, v))
    }

    /// Ray-cast image: pixel `(x, y)` shows the color of the surface hit
    /// through its center.
    pub fn render_rgb(&self, pose: &PoseSE3, intr: &PinholeIntrinsics) -> RgbImage {
        let mut img = RgbImage::filled(intr.width, intr.height, [0.0; 3]);
        for y in 0..intr.height {
            for x in 0..intr.width {
                if let Some(p) = self.hit_through(pose, intr, x as f64, y as f64) {
                    img.set(x, y, self.color_at(&p));
                }
            }
        }
        img
    }

    /// Descriptor map at `1/stride` resolution; cell `(fx, fy)` samples the
    /// ray through context pixel `((fx + 0.5) * stride - 0.5, ...)`.
    pub fn render_features(
        &self,
        pose: &PoseSE3,
        intr: &PinholeIntrinsics,
        stride: usize,
    ) -> Result<Vec<f32>> {
        let small = intr.scaled(stride)?;
        let mut out = Vec::with_capacity(small.width * small.height * self.feat_dim);
        for fy in 0..small.height {
            for fx in 0..small.width {
                let u = (fx as f64 + 0.5) * stride as f64 - 0.5;
                let v = (fy as f64 + 0.5) * stride as f64 - 0.5;
                match self.hit_through(pose, intr, u, v) {
                    Some(p) => out.extend(self.descriptor_at(&p).into_iter().map(|d| d as f32)),
                    None => out.extend(std::iter::repeat_n(0.0f32, self.feat_dim)),
                }
            }
        }
        Ok(out)
    }
}

pub fn analytic_descriptor(c: [f64; 3], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let f = (k + 1) as f64;
            (1.7 * f * c[0] + 0.3 * f).sin() * (1.3 * f * c[1]).cos() + 0.5 * (0.9 * f * c[2]).sin()
        })
        .collect()
}

/// A complete synthetic context dataset.
#[derive(Debug, Clone)]
pub struct SceneDataset {
    pub scene: SyntheticScene,
    pub intrinsics: PinholeIntrinsics,
    pub context: CameraTrajectory,
    pub frames: Vec<RgbImage>,
    /// `None` when `feat_dim` is 0.
    pub features: Option<FeatureVideo>,
    pub points: Vec<(u64, Vec3)>,
    pub observations: Vec<ObservationRecord>,
    /// Ground-truth color and descriptor per point, aligned with `points`.
    pub colors: Vec<[f32; 3]>,
    pub descriptors: Vec<Vec<f64>>,
}

/// Default-sized scene with the given room half-width and point count.
pub fn generate_scene(seed: u64, extent: f64, point_count: usize) -> Result<SceneDataset> {
    generate_scene_with(
        seed,
        &SceneParams {
            extent,
            point_count,
            ..SceneParams::default()
        },
    )
}

/// Context cameras orbit inside the room above the objects.
pub fn context_trajectory_params(params: &SceneParams) -> TrajectoryParams {
    TrajectoryParams {
        radius: 0.6 * params.extent,
        height: 1.4,
        look_height: 0.4,
        ..TrajectoryParams::default()
    }
}

pub fn generate_scene_with(seed: u64, params: &SceneParams) -> Result<SceneDataset> {
    if params.point_count == 0 || params.context_frames == 0 {
        return Err(Error::InvalidInput(
            "need at least one point and one context frame".into(),
        ));
    }
    let scene = SyntheticScene::new(seed, params)?;
    let intr = intrinsics_for(params.width, params.height, params.fov_deg)?;
    let context = generate_trajectory(
        seed,
        params.context_frames,
        MotionProfile::Orbit,
        &context_trajectory_params(params),
    )?;
    let frames: Vec<RgbImage> = context
        .poses()
        .iter()
        .map(|p| scene.render_rgb(p, &intr))
        .collect();
    let features = if params.feat_dim > 0 {
        let small = intr.scaled(params.stride)?;
        let mut data = Vec::new();
        for p in context.poses() {
            data.extend(scene.render_features(p, &intr, params.stride)?);
        }
        Some(FeatureVideo::from_raw(
            context.len(),
            small.height,
            small.width,
            params.feat_dim,
            data,
        )?)
    } else {
        None
    };

    // Border pixels are skipped: their reprojection may round just outside the image.
    if params.width < 3 || params.height < 3 {
        return Err(Error::InvalidInput(
            "context frames must be at least 3x3".into(),
        ));
    }
    let (iw, ih) = (params.width - 2, params.height - 2);
    let per_frame = iw * ih;
    let total = per_frame * context.len();
    if params.point_count > total {
        return Err(Error::InvalidInput(format!(
            "{} points requested but only {total} interior context pixels exist",
            params.point_count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x901D7);
    let picks: BTreeSet<usize> = sample(&mut rng, total, params.point_count)
        .into_iter()
        .collect();

    let mut points = Vec::with_capacity(picks.len());
    let mut observations = Vec::with_capacity(picks.len());
    let mut colors = Vec::with_capacity(picks.len());
    let mut descriptors = Vec::with_capacity(picks.len());
    for (uid, pick) in picks.into_iter().enumerate() {
        let slot = pick / per_frame;
        let (x, y) = (1 + pick % per_frame % iw, 1 + pick % per_frame / iw);
        let pose = &context.poses()[slot];
        let p = scene
            .hit_through(pose, &intr, x as f64, y as f64)
            .ok_or_else(|| Error::DegenerateConfiguration("context ray escaped the room".into()))?;
        points.push((uid as u64, p));
        observations.push(ObservationRecord {
            frame: context.frames()[slot],
            uid: uid as u64,
            u: x as f64,
            v: y as f64,
            line: uid + 2,
        });
        colors.push(scene.color_at(&p));
        descriptors.push(scene.descriptor_at(&p));
    }
    Ok(SceneDataset {
        scene,
        intrinsics: intr,
        context,
        frames,
        features,
        points,
        observations,
        colors,
        descriptors,
    })
}
