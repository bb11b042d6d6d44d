//! Z-buffered point splatting of the spatial memory into target views.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureVideo, OccupancyMask};
use crate::geometry::{PinholeIntrinsics, PoseSE3, Vec3};
use crate::image::{Rgb, RgbImage};
use crate::memory::SpatialMemory;
use crate::trajectory::CameraTrajectory;

/// Marks a pixel that no voxel wrote to.
pub const NO_VOXEL: u32 = u32::MAX;

/// Per-pixel winning voxel index and its camera depth.
#[derive(Debug, Clone, PartialEq)]
pub struct IdBuffer {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u32>,
    pub depth: Vec<f64>,
}

impl IdBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ids: vec![NO_VOXEL; width * height],
            depth: vec![f64::INFINITY; width * height],
        }
    }

    pub fn id(&self, x: usize, y: usize) -> Option<u32> {
        let id = self.ids[y * self.width + x];
        (id != NO_VOXEL).then_some(id)
    }
}

/// Pixel offsets `(dx, dy)` with `dx^2 + dy^2 <= r^2`, row-major.
fn disk_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Splats world points into one view. Points are visited in index order and
/// write only on strictly smaller depth, so equal depths keep the lower index.
pub fn splat_ids(
    centers: &[Vec3],
    pose: &PoseSE3,
    intr: &PinholeIntrinsics,
    radius: u32,
) -> IdBuffer {
    let (w, h) = (intr.width, intr.height);
    let mut buf = IdBuffer::new(w, h);
    let offsets = disk_offsets(radius);
    for (i, c) in centers.iter().enumerate() {
        let Some(p) = intr.project(&pose.world_to_camera(c)) else {
            continue;
        };
        let (px, py) = p.pixel();
        for &(dx, dy) in &offsets {
            let x = px as i64 + dx;
            let y = py as i64 + dy;
            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                continue;
            }
            let k = y as usize * w + x as usize;
            if p.depth < buf.depth[k] {
                buf.depth[k] = p.depth;
                buf.ids[k] = i as u32;
            }
        }
    }
    buf
}

/// Per-frame id buffers of the RGB voxels.
pub fn render_rgb_ids(
    mem: &SpatialMemory,
    traj: &CameraTrajectory,
    intr: &PinholeIntrinsics,
    radius: u32,
) -> Vec<IdBuffer> {
    let centers: Vec<Vec3> = mem.rgb_voxels.iter().map(|v| v.center).collect();
    traj.poses()
        .par_iter()
        .map(|pose| splat_ids(&centers, pose, intr, radius))
        .collect()
}

pub fn render_rgb_splat(
    mem: &SpatialMemory,
    traj: &CameraTrajectory,
    intr: &PinholeIntrinsics,
    radius: u32,
    background: Rgb,
) -> Vec<RgbImage> {
    render_rgb_ids(mem, traj, intr, radius)
        .into_iter()
        .map(|buf| {
            let mut img = RgbImage::filled(buf.width, buf.height, background);
            for y in 0..buf.height {
                for x in 0..buf.width {
                    if let Some(id) = buf.id(x, y) {
                        img.set(x, y, mem.rgb_voxels[id as usize].color);
                    }
                }
            }
            img
        })
        .collect()
}

/// Per-frame id buffers of the feature voxels on the `1/stride` grid.
pub fn render_feature_ids(
    mem: &SpatialMemory,
    traj: &CameraTrajectory,
    intr: &PinholeIntrinsics,
    stride: usize,
) -> Result<Vec<IdBuffer>> {
    let coarse = intr.scaled(stride)?;
    let centers: Vec<Vec3> = mem.feat_voxels.iter().map(|v| v.center).collect();
    Ok(traj
        .poses()
        .par_iter()
        .map(|pose| splat_ids(&centers, pose, &coarse, 0))
        .collect())
}

/// Nearest feature voxel per coarse cell; empty cells are zero and unset in the mask.
pub fn render_feature_splat(
    mem: &SpatialMemory,
    traj: &CameraTrajectory,
    intr: &PinholeIntrinsics,
    stride: usize,
) -> Result<(FeatureVideo, OccupancyMask)> {
    if mem.feat_dim == 0 {
        return Err(Error::InvalidInput(
            "memory carries no feature descriptors".into(),
        ));
    }
    if traj.is_empty() {
        return Err(Error::InvalidInput("trajectory is empty".into()));
    }
    let bufs = render_feature_ids(mem, traj, intr, stride)?;
    let (w, h) = (bufs[0].width, bufs[0].height);
    let mut video = FeatureVideo::zeros(bufs.len(), h, w, mem.feat_dim);
    let mut mask = OccupancyMask::zeros(bufs.len(), h, w);
    for (t, buf) in bufs.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if let Some(id) = buf.id(x, y) {
                    video
                        .cell_mut(t, y, x)
                        .copy_from_slice(&mem.feat_voxels[id as usize].descriptor);
                    mask.set(t, y, x, 1);
                }
            }
        }
    }
    Ok((video, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle;
    use crate::memory::{FeatVoxel, RgbVoxel};

    fn intr(w: usize, h: usize) -> PinholeIntrinsics {
        PinholeIntrinsics::new(50.0, 50.0, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap()
    }

    fn mem_with(rgb: Vec<RgbVoxel>, feat: Vec<FeatVoxel>, dim: usize) -> SpatialMemory {
        SpatialMemory {
            rgb_voxels: rgb,
            feat_voxels: feat,
            feat_dim: dim,
            ..SpatialMemory::empty(0.01, 0.02)
        }
    }

    /// Per-pixel loop over every voxel; shares no code with `splat_ids`.
    fn oracle(centers: &[Vec3], pose: &PoseSE3, k: &PinholeIntrinsics) -> Vec<u32> {
        let r = pose.rotation;
        let mut out = vec![NO_VOXEL; k.width * k.height];
        for y in 0..k.height {
            for x in 0..k.width {
                let mut best = (f64::INFINITY, NO_VOXEL);
                for (i, c) in centers.iter().enumerate() {
                    let pc = r.transpose() * (c - pose.translation);
                    if pc.z <= 1e-4 {
                        continue;
                    }
                    let u = k.fx * pc.x / pc.z + k.cx;
                    let v = k.fy * pc.y / pc.z + k.cy;
                    if u.floor() == x as f64 && v.floor() == y as f64 && pc.z < best.0 {
                        best = (pc.z, i as u32);
                    }
                }
                out[y * k.width + x] = best.1;
            }
        }
        out
    }

    #[test]
    fn nearer_voxel_wins() {
        let red = RgbVoxel {
            center: Vec3::new(0.0, 0.0, 1.0),
            color: [1.0, 0.0, 0.0],
        };
        let blue = RgbVoxel {
            center: Vec3::new(0.0, 0.0, 2.0),
            color: [0.0, 0.0, 1.0],
        };
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity()]);
        let k = intr(8, 8);
        for order in [vec![red, blue], vec![blue, red]] {
            let img = &render_rgb_splat(&mem_with(order, vec![], 0), &traj, &k, 0, [0.0; 3])[0];
            assert_eq!(img.get(4, 4), [1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn equal_depth_keeps_lower_index() {
        let a = Vec3::new(0.001, 0.0, 1.0);
        let b = Vec3::new(0.002, 0.0, 1.0);
        let k = intr(8, 8);
        let buf = splat_ids(&[a, b], &PoseSE3::identity(), &k, 0);
        assert_eq!(buf.id(4, 4), Some(0));
        let buf = splat_ids(&[b, a], &PoseSE3::identity(), &k, 0);
        assert_eq!(buf.id(4, 4), Some(0));
    }

    #[test]
    fn empty_memory_is_background() {
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity(); 2]);
        let imgs = render_rgb_splat(
            &mem_with(vec![], vec![], 3),
            &traj,
            &intr(6, 4),
            2,
            [0.1, 0.2, 0.3],
        );
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[1], RgbImage::filled(6, 4, [0.1, 0.2, 0.3]));
        let (f, m) =
            render_feature_splat(&mem_with(vec![], vec![], 3), &traj, &intr(8, 8), 2).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
        assert!(m.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn disk_radius_one() {
        let k = intr(9, 9);
        let buf = splat_ids(&[Vec3::new(0.0, 0.0, 1.0)], &PoseSE3::identity(), &k, 1);
        let written = buf.ids.iter().filter(|&&i| i != NO_VOXEL).count();
        assert_eq!(written, 5);
        assert_eq!(disk_offsets(2).len(), 13);
    }

    #[test]
    fn single_feature_voxel_one_cell() {
        let fv = FeatVoxel {
            center: Vec3::new(0.1, -0.05, 1.5),
            descriptor: vec![0.5, -2.0],
        };
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity()]);
        let (f, m) =
            render_feature_splat(&mem_with(vec![], vec![fv], 2), &traj, &intr(32, 32), 8).unwrap();
        assert_eq!((f.height(), f.width()), (4, 4));
        assert_eq!(m.data.iter().filter(|&&v| v == 1).count(), 1);
        let nonzero: Vec<&[f32]> = (0..4)
            .flat_map(|y| (0..4).map(move |x| (y, x)))
            .map(|(y, x)| f.cell(0, y, x))
            .filter(|c| c.iter().any(|&v| v != 0.0))
            .collect();
        assert_eq!(nonzero, vec![&[0.5f32, -2.0][..]]);
        assert!(matches!(
            render_feature_splat(&mem_with(vec![], vec![], 2), &traj, &intr(30, 32), 8),
            Err(Error::StrideMismatch { .. })
        ));
    }

    #[test]
    fn matches_brute_force_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let k = intr(32, 24);
        for _ in 0..5 {
            let centers: Vec<Vec3> = (0..300)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        // a few coarse depth levels produce ties
                        (rng.random_range(1..4) as f64) * 0.5,
                    )
                })
                .collect();
            let pose = PoseSE3 {
                rotation: axis_angle(Vec3::new(0.1, 1.0, 0.0), rng.random_range(-0.2..0.2)),
                translation: Vec3::new(0.0, 0.0, rng.random_range(-0.5..0.0)),
            };
            let fast = splat_ids(&centers, &pose, &k, 0);
            assert_eq!(fast.ids, oracle(&centers, &pose, &k));
        }
    }

    #[test]
    fn rigid_shift_equivariance() {
        let k = intr(16, 16);
        let vox: Vec<RgbVoxel> = (0..40)
            .map(|i| RgbVoxel {
                center: Vec3::new(
                    (i % 7) as f64 * 0.05 - 0.15,
                    (i / 7) as f64 * 0.05 - 0.15,
                    1.0 + (i % 3) as f64 * 0.1,
                ),
                color: [i as f32 / 40.0, 0.5, 0.25],
            })
            .collect();
        let mem = mem_with(vox.clone(), vec![], 0);
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity()]);
        // translation by a dyadic offset keeps arithmetic exact
        let shift = Vec3::new(0.5, -0.25, 2.0);
        let moved = mem_with(
            vox.iter()
                .map(|v| RgbVoxel {
                    center: v.center + shift,
                    color: v.color,
                })
                .collect(),
            vec![],
            0,
        );
        let moved_traj = CameraTrajectory::from_poses(vec![PoseSE3 {
            rotation: nalgebra::Matrix3::identity(),
            translation: shift,
        }]);
        let a = render_rgb_splat(&mem, &traj, &k, 0, [0.0; 3]);
        let b = render_rgb_splat(&moved, &moved_traj, &k, 0, [0.0; 3]);
        let differing = a[0]
            .data()
            .iter()
            .zip(b[0].data())
            .filter(|(x, y)| x != y)
            .count();
        // centers are not dyadic, so allow rare floor-boundary flips only
        assert!(differing <= 3, "{differing} channels differ");
    }
}
