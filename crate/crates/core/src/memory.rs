//! Semi-dense point ingestion, per-point appearance sampling, voxel pooling
//! and the persistent spatial memory (`memory.e3m`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureVideo;
use crate::geometry::{PinholeIntrinsics, Vec3};
use crate::image::RgbImage;
use crate::io::{field, read_csv, read_maybe_gz, write_atomic, LeReader, LeWriter};
use crate::numeric::exact_sum;
use crate::trajectory::CameraTrajectory;

pub const DEFAULT_VOXEL_SIZE_RGB: f32 = 0.01;
pub const DEFAULT_VOXEL_SIZE_FEAT: f32 = 0.02;
pub const DEFAULT_FEATURE_STRIDE: usize = 8;

const MEMORY_MAGIC: &[u8; 4] = b"E3M1";

/// One 2D observation of a point in a context frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Frame index as written in the input files.
    pub frame: u32,
    /// Position of that frame within the context trajectory (and video).
    pub slot: usize,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemidensePoint {
    pub uid: u64,
    pub position: Vec3,
    pub observations: Vec<Observation>,
}

/// Points that survived frustum filtering, sorted by uid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SemidensePoints {
    pub points: Vec<SemidensePoint>,
}

/// A raw row of `observations.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub frame: u32,
    pub uid: u64,
    pub u: f64,
    pub v: f64,
    /// 1-based source line, used in diagnostics.
    pub line: usize,
}

pub fn read_points_csv(path: &Path) -> Result<Vec<(u64, Vec3)>> {
    let mut out = Vec::new();
    read_csv(path, &["uid", "px", "py", "pz"], |rec, line| {
        let uid: u64 = field(rec, 0, "uid", path, line)?;
        let p = Vec3::new(
            field(rec, 1, "px", path, line)?,
            field(rec, 2, "py", path, line)?,
            field(rec, 3, "pz", path, line)?,
        );
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::parse(path, line, "non-finite point position"));
        }
        out.push((uid, p));
        Ok(())
    })?;
    Ok(out)
}

pub fn read_observations_csv(path: &Path) -> Result<Vec<ObservationRecord>> {
    let mut out = Vec::new();
    read_csv(path, &["frame", "uid", "u", "v"], |rec, line| {
        let r = ObservationRecord {
            frame: field(rec, 0, "frame", path, line)?,
            uid: field(rec, 1, "uid", path, line)?,
            u: field(rec, 2, "u", path, line)?,
            v: field(rec, 3, "v", path, line)?,
            line,
        };
        if !(r.u.is_finite() && r.v.is_finite()) {
            return Err(Error::parse(path, line, "non-finite observation"));
        }
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_points_csv(path: &Path, points: &[(u64, Vec3)]) -> Result<()> {
    let mut s = String::from("uid,px,py,pz\n");
    for (uid, p) in points {
        let _ = writeln!(s, "{uid},{},{},{}", p.x, p.y, p.z);
    }
    write_atomic(path, s.as_bytes())
}

pub fn write_observations_csv(path: &Path, obs: &[ObservationRecord]) -> Result<()> {
    let mut s = String::from("frame,uid,u,v\n");
    for o in obs {
        let _ = writeln!(s, "{},{},{},{}", o.frame, o.uid, o.u, o.v);
    }
    write_atomic(path, s.as_bytes())
}

/// Reads both files and applies [`ingest_records`].
pub fn ingest_semidense(
    points_file: &Path,
    observations_file: &Path,
    context_trajectory: &CameraTrajectory,
    intr: &PinholeIntrinsics,
) -> Result<SemidensePoints> {
    let points = read_points_csv(points_file)?;
    let observations = read_observations_csv(observations_file)?;
    ingest_records(&points, &observations, context_trajectory, intr).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::parse(points_file, 0, msg),
        e => e,
    })
}

/// Joins points with their observations and keeps only observations whose
/// point projects in-frustum under the observing frame's pose and whose
/// `(u, v)` lies inside the image. Points left without observations are dropped.
///
/// Rows repeating a uid with the identical position are merged; a repeated uid
/// with a different position is an error.
pub fn ingest_records(
    points: &[(u64, Vec3)],
    observations: &[ObservationRecord],
    context_trajectory: &CameraTrajectory,
    intr: &PinholeIntrinsics,
) -> Result<SemidensePoints> {
    let mut by_uid: BTreeMap<u64, SemidensePoint> = BTreeMap::new();
    for &(uid, position) in points {
        match by_uid.get(&uid) {
            Some(existing) if existing.position != position => {
                return Err(Error::InvalidInput(format!(
                    "uid {uid} appears with two different positions"
                )));
            }
            Some(_) => {}
            None => {
                by_uid.insert(
                    uid,
                    SemidensePoint {
                        uid,
                        position,
                        observations: Vec::new(),
                    },
                );
            }
        }
    }

    let (w, h) = (intr.width as f64, intr.height as f64);
    for rec in observations {
        let point = by_uid.get_mut(&rec.uid).ok_or(Error::UnknownUid {
            uid: rec.uid,
            line: rec.line,
        })?;
        let slot = context_trajectory
            .frames()
            .binary_search(&rec.frame)
            .map_err(|_| Error::UnknownFrame {
                frame: rec.frame,
                line: rec.line,
            })?;
        let pose = &context_trajectory.poses()[slot];
        let in_frustum = intr
            .project(&pose.world_to_camera(&point.position))
            .is_some();
        let in_image = rec.u >= 0.0 && rec.u < w && rec.v >= 0.0 && rec.v < h;
        if in_frustum && in_image {
            point.observations.push(Observation {
                frame: rec.frame,
                slot,
                u: rec.u,
                v: rec.v,
            });
        }
    }

    let points: Vec<SemidensePoint> = by_uid
        .into_values()
        .filter(|p| !p.observations.is_empty())
        .collect();
    Ok(SemidensePoints { points })
}

/// Per-point color: bilinear sample at every observation, then the mean over
/// observations. `frames[k]` is the context frame at trajectory slot `k`.
pub fn sample_point_colors(pts: &SemidensePoints, frames: &[RgbImage]) -> Result<Vec<[f64; 3]>> {
    pts.points
        .iter()
        .map(|p| {
            let mut acc = [0.0f64; 3];
            for o in &p.observations {
                let img = frames.get(o.slot).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "observation of uid {} refers to missing context frame {}",
                        p.uid, o.frame
                    ))
                })?;
                let c = img.bilinear(o.u, o.v);
                for k in 0..3 {
                    acc[k] += c[k];
                }
            }
            let n = p.observations.len() as f64;
            Ok(acc.map(|c| (c / n).clamp(0.0, 1.0)))
        })
        .collect()
}

/// Maps a context-pixel coordinate onto a feature grid downsampled by `stride`
/// with half-pixel-center alignment.
#[inline]
pub fn pixel_to_feature_coord(u: f64, stride: usize) -> f64 {
    (u + 0.5) / stride as f64 - 0.5
}

/// Per-point descriptor: bilinear sample (edge-clamped) of the context feature
/// map at each observation, then the mean over observations.
pub fn sample_point_features(
    pts: &SemidensePoints,
    feats: &FeatureVideo,
    intr: &PinholeIntrinsics,
    spatial_stride: usize,
) -> Result<Vec<Vec<f64>>> {
    let mismatch = || Error::StrideMismatch {
        width: intr.width,
        height: intr.height,
        stride: spatial_stride,
    };
    if spatial_stride == 0
        || !intr.width.is_multiple_of(spatial_stride)
        || !intr.height.is_multiple_of(spatial_stride)
    {
        return Err(mismatch());
    }
    if feats.width() != intr.width / spatial_stride
        || feats.height() != intr.height / spatial_stride
    {
        return Err(mismatch());
    }
    pts.points
        .iter()
        .map(|p| {
            let mut acc = vec![0.0f64; feats.channels()];
            for o in &p.observations {
                if o.slot >= feats.n_frames() {
                    return Err(Error::InvalidInput(format!(
                        "observation of uid {} refers to missing feature frame {}",
                        p.uid, o.frame
                    )));
                }
                let s = feats.bilinear(
                    o.slot,
                    pixel_to_feature_coord(o.u, spatial_stride),
                    pixel_to_feature_coord(o.v, spatial_stride),
                );
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v;
                }
            }
            let n = p.observations.len() as f64;
            Ok(acc.into_iter().map(|a| a / n).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledVoxel {
    pub index: [i64; 3],
    pub center: Vec3,
    pub payload: Vec<f64>,
    pub count: usize,
}

#[inline]
pub fn voxel_index(p: &Vec3, voxel_size: f64) -> [i64; 3] {
    [
        (p.x / voxel_size).floor() as i64,
        (p.y / voxel_size).floor() as i64,
        (p.z / voxel_size).floor() as i64,
    ]
}

#[inline]
pub fn voxel_center(index: [i64; 3], voxel_size: f64) -> Vec3 {
    Vec3::new(
        (index[0] as f64 + 0.5) * voxel_size,
        (index[1] as f64 + 0.5) * voxel_size,
        (index[2] as f64 + 0.5) * voxel_size,
    )
}

/// Groups points by `floor(p / voxel_size)` and averages their payloads.
///
/// Sums are exact (correctly rounded), so the output does not depend on
/// input order. Output is sorted by voxel index; each center is the voxel's
/// geometric center.
pub fn voxel_pool<P: AsRef<[f64]>>(
    positions: &[Vec3],
    payloads: &[P],
    voxel_size: f64,
) -> Result<Vec<PooledVoxel>> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::InvalidInput(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    if positions.len() != payloads.len() {
        return Err(Error::LengthMismatch {
            left: positions.len(),
            right: payloads.len(),
        });
    }
    let dim = payloads.first().map(|p| p.as_ref().len()).unwrap_or(0);
    if payloads.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::ShapeMismatch("payload dimensions differ".into()));
    }

    let mut keyed: Vec<([i64; 3], usize)> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| (voxel_index(p, voxel_size), i))
        .collect();
    keyed.sort_unstable();

    let mut out = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let key = keyed[start].0;
        let mut end = start + 1;
        while end < keyed.len() && keyed[end].0 == key {
            end += 1;
        }
        let members = &keyed[start..end];
        let count = members.len();
        let payload = (0..dim)
            .map(|k| {
                exact_sum(members.iter().map(|&(_, i)| payloads[i].as_ref()[k])) / count as f64
            })
            .collect();
        out.push(PooledVoxel {
            index: key,
            center: voxel_center(key, voxel_size),
            payload,
            count,
        });
        start = end;
    }
    Ok(out)
}

/// Per-point descriptors together with their width, so that an empty set still
/// carries its dimension.
#[derive(Debug, Clone, Copy)]
pub struct Descriptors<'a> {
    pub values: &'a [Vec<f64>],
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgbVoxel {
    pub center: Vec3,
    pub color: [f32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatVoxel {
    pub center: Vec3,
    pub descriptor: Vec<f32>,
}

/// Voxel-pooled colored points and appearance descriptors.
///
/// Voxel sizes are single precision, matching the on-disk format; every
/// pooling step uses exactly `f64::from(voxel_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMemory {
    pub voxel_size_rgb: f32,
    pub voxel_size_feat: f32,
    pub rgb_voxels: Vec<RgbVoxel>,
    pub feat_voxels: Vec<FeatVoxel>,
    /// Descriptor width; 0 when the memory has no feature voxels.
    pub feat_dim: usize,
}

/// An axis-aligned box or a sphere in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Box { min: Vec3, max: Vec3 },
    Sphere { center: Vec3, radius: f64 },
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Box { min, max } => {
                if (0..3).any(|i| !(min[i] <= max[i])) {
                    return Err(Error::InvalidInput(format!(
                        "box min {min:?} exceeds max {max:?}"
                    )));
                }
            }
            Region::Sphere { radius, center } => {
                if !(*radius > 0.0) || !center.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Closed-set membership.
    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Region::Box { min, max } => (0..3).all(|i| p[i] >= min[i] && p[i] <= max[i]),
            Region::Sphere { center, radius } => (p - center).norm_squared() <= radius * radius,
        }
    }
}

impl SpatialMemory {
    pub fn empty(voxel_size_rgb: f32, voxel_size_feat: f32) -> Self {
        Self {
            voxel_size_rgb,
            voxel_size_feat,
            rgb_voxels: Vec::new(),
            feat_voxels: Vec::new(),
            feat_dim: 0,
        }
    }

    /// Pools per-point colors (and optional descriptors) into a memory.
    pub fn build(
        pts: &SemidensePoints,
        colors: &[[f64; 3]],
        descriptors: Option<Descriptors<'_>>,
        voxel_size_rgb: f32,
        voxel_size_feat: f32,
    ) -> Result<Self> {
        check_voxel_size(voxel_size_rgb)?;
        check_voxel_size(voxel_size_feat)?;
        let positions: Vec<Vec3> = pts.points.iter().map(|p| p.position).collect();
        let rgb_voxels = voxel_pool(&positions, colors, voxel_size_rgb as f64)?
            .into_iter()
            .map(|v| RgbVoxel {
                center: v.center,
                color: [
                    v.payload[0] as f32,
                    v.payload[1] as f32,
                    v.payload[2] as f32,
                ],
            })
            .collect();
        let (feat_voxels, feat_dim) = match descriptors {
            Some(desc) => {
                if desc.values.len() != positions.len() {
                    return Err(Error::LengthMismatch {
                        left: positions.len(),
                        right: desc.values.len(),
                    });
                }
                if desc.values.iter().any(|d| d.len() != desc.dim) {
                    return Err(Error::ShapeMismatch(format!(
                        "descriptors must have width {}",
                        desc.dim
                    )));
                }
                let voxels = voxel_pool(&positions, desc.values, voxel_size_feat as f64)?
                    .into_iter()
                    .map(|v| FeatVoxel {
                        center: v.center,
                        descriptor: v.payload.iter().map(|&x| x as f32).collect(),
                    })
                    .collect();
                (voxels, desc.dim)
            }
            None => (Vec::new(), 0),
        };
        Ok(Self {
            voxel_size_rgb,
            voxel_size_feat,
            rgb_voxels,
            feat_voxels,
            feat_dim,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.rgb_voxels.is_empty() && self.feat_voxels.is_empty()
    }

    /// Pools the memory's own voxels again at its voxel sizes.
    pub fn repool(&self) -> Result<Self> {
        let rgb_pos: Vec<Vec3> = self.rgb_voxels.iter().map(|v| v.center).collect();
        let rgb_pay: Vec<[f64; 3]> = self
            .rgb_voxels
            .iter()
            .map(|v| v.color.map(f64::from))
            .collect();
        let rgb_voxels = voxel_pool(&rgb_pos, &rgb_pay, self.voxel_size_rgb as f64)?
            .into_iter()
            .map(|v| RgbVoxel {
                center: v.center,
                color: [
                    v.payload[0] as f32,
                    v.payload[1] as f32,
                    v.payload[2] as f32,
                ],
            })
            .collect();
        let feat_pos: Vec<Vec3> = self.feat_voxels.iter().map(|v| v.center).collect();
        let feat_pay: Vec<Vec<f64>> = self
            .feat_voxels
            .iter()
            .map(|v| v.descriptor.iter().map(|&x| x as f64).collect())
            .collect();
        let feat_voxels = voxel_pool(&feat_pos, &feat_pay, self.voxel_size_feat as f64)?
            .into_iter()
            .map(|v| FeatVoxel {
                center: v.center,
                descriptor: v.payload.iter().map(|&x| x as f32).collect(),
            })
            .collect();
        Ok(Self {
            rgb_voxels,
            feat_voxels,
            ..self.clone()
        })
    }

    /// Returns a copy without the voxels whose centers lie in `region`.
    pub fn delete_region(&self, region: &Region) -> Result<Self> {
        region.validate()?;
        Ok(Self {
            voxel_size_rgb: self.voxel_size_rgb,
            voxel_size_feat: self.voxel_size_feat,
            rgb_voxels: self
                .rgb_voxels
                .iter()
                .filter(|v| !region.contains(&v.center))
                .copied()
                .collect(),
            feat_voxels: self
                .feat_voxels
                .iter()
                .filter(|v| !region.contains(&v.center))
                .cloned()
                .collect(),
            feat_dim: self.feat_dim,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = LeWriter::new(MEMORY_MAGIC);
        w.u32(self.rgb_voxels.len() as u32);
        w.u32(self.feat_voxels.len() as u32);
        w.u32(self.feat_dim as u32);
        w.f32(self.voxel_size_rgb);
        w.f32(self.voxel_size_feat);
        for v in &self.rgb_voxels {
            for k in 0..3 {
                w.f64(v.center[k]);
            }
            for c in v.color {
                w.f32(c);
            }
        }
        for v in &self.feat_voxels {
            for k in 0..3 {
                w.f64(v.center[k]);
            }
            for &d in &v.descriptor {
                w.f32(d);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = LeReader::new(bytes, MEMORY_MAGIC, path, "memory")?;
        let n_rgb = r.u32()? as usize;
        let n_feat = r.u32()? as usize;
        let feat_dim = r.u32()? as usize;
        let voxel_size_rgb = r.f32()?;
        let voxel_size_feat = r.f32()?;
        if n_feat > 0 && feat_dim == 0 {
            return Err(r.err("feature voxels with zero descriptor width"));
        }
        let mut rgb_voxels = Vec::with_capacity(n_rgb.min(1 << 24));
        for _ in 0..n_rgb {
            let center = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
            let color = [r.f32()?, r.f32()?, r.f32()?];
            rgb_voxels.push(RgbVoxel { center, color });
        }
        let mut feat_voxels = Vec::with_capacity(n_feat.min(1 << 24));
        for _ in 0..n_feat {
            let center = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
            let descriptor = r.f32_vec(feat_dim)?;
            feat_voxels.push(FeatVoxel { center, descriptor });
        }
        r.finish()?;
        Ok(Self {
            voxel_size_rgb,
            voxel_size_feat,
            rgb_voxels,
            feat_voxels,
            feat_dim,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_maybe_gz(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

fn check_voxel_size(v: f32) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidInput(format!(
            "voxel size must be positive, got {v}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PoseSE3;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k100() -> PinholeIntrinsics {
        PinholeIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    fn obs(frame: u32, uid: u64, u: f64, v: f64) -> ObservationRecord {
        ObservationRecord {
            frame,
            uid,
            u,
            v,
            line: 2,
        }
    }

    #[test]
    fn ingest_keeps_in_frustum_point() {
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity()]);
        let pts = ingest_records(
            &[(7, Vec3::new(0.0, 0.0, 2.0))],
            &[obs(0, 7, 50.0, 50.0)],
            &traj,
            &k100(),
        )
        .unwrap();
        assert_eq!(pts.points.len(), 1);
        assert_eq!(pts.points[0].observations[0].slot, 0);
    }

    #[test]
    fn ingest_drops_point_behind_cameras() {
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity(), PoseSE3::identity()]);
        let pts = ingest_records(
            &[(1, Vec3::new(0.0, 0.0, -2.0))],
            &[obs(0, 1, 50.0, 50.0), obs(1, 1, 50.0, 50.0)],
            &traj,
            &k100(),
        )
        .unwrap();
        assert!(pts.points.is_empty());
    }

    #[test]
    fn ingest_unknown_uid_and_frame() {
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity()]);
        let p = [(1, Vec3::new(0.0, 0.0, 2.0))];
        assert!(matches!(
            ingest_records(&p, &[obs(0, 999, 1.0, 1.0)], &traj, &k100()),
            Err(Error::UnknownUid { uid: 999, line: 2 })
        ));
        assert!(matches!(
            ingest_records(&p, &[obs(5, 1, 1.0, 1.0)], &traj, &k100()),
            Err(Error::UnknownFrame { frame: 5, .. })
        ));
    }

    #[test]
    fn ingest_merges_exact_duplicate_uids() {
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity()]);
        let p = Vec3::new(0.0, 0.0, 2.0);
        let pts =
            ingest_records(&[(1, p), (1, p)], &[obs(0, 1, 50.0, 50.0)], &traj, &k100()).unwrap();
        assert_eq!(pts.points.len(), 1);
        assert!(ingest_records(&[(1, p), (1, p * 2.0)], &[], &traj, &k100()).is_err());
    }

    #[test]
    fn ingest_from_files_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let pp = dir.path().join("points.csv");
        let op = dir.path().join("observations.csv");
        std::fs::write(&pp, "uid,px,py,pz\n1,0,0,2\n").unwrap();
        std::fs::write(&op, "frame,uid,u,v\n0,1,50,50\n0,999,1,1\n").unwrap();
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity()]);
        match ingest_semidense(&pp, &op, &traj, &k100()) {
            Err(Error::UnknownUid { uid: 999, line: 3 }) => {}
            other => panic!("{other:?}"),
        }
        std::fs::write(&op, "frame,uid,u,v\n0,1,abc,50\n").unwrap();
        assert!(matches!(
            ingest_semidense(&pp, &op, &traj, &k100()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    fn single_point(observations: Vec<Observation>) -> SemidensePoints {
        SemidensePoints {
            points: vec![SemidensePoint {
                uid: 0,
                position: Vec3::zeros(),
                observations,
            }],
        }
    }

    fn o(slot: usize, u: f64, v: f64) -> Observation {
        Observation {
            frame: slot as u32,
            slot,
            u,
            v,
        }
    }

    #[test]
    fn colors_single_and_mean() {
        let red = RgbImage::filled(4, 4, [1.0, 0.0, 0.0]);
        let blue = RgbImage::filled(4, 4, [0.0, 0.0, 1.0]);
        let c = sample_point_colors(
            &single_point(vec![o(0, 2.0, 1.0)]),
            std::slice::from_ref(&red),
        )
        .unwrap();
        assert_eq!(c[0], [1.0, 0.0, 0.0]);
        let c = sample_point_colors(
            &single_point(vec![o(0, 2.0, 1.0), o(1, 0.5, 3.0)]),
            &[red, blue],
        )
        .unwrap();
        assert_eq!(c[0], [0.5, 0.0, 0.5]);
    }

    #[test]
    fn colors_missing_frame_is_error() {
        let red = RgbImage::filled(4, 4, [1.0, 0.0, 0.0]);
        assert!(sample_point_colors(&single_point(vec![o(3, 1.0, 1.0)]), &[red]).is_err());
    }

    #[test]
    fn features_constant_and_mean() {
        let k = PinholeIntrinsics::new(4.0, 4.0, 2.0, 2.0, 4, 4).unwrap();
        let constant = FeatureVideo::from_raw(1, 4, 4, 1, vec![2.5; 16]).unwrap();
        let d =
            sample_point_features(&single_point(vec![o(0, 1.3, 2.7)]), &constant, &k, 1).unwrap();
        assert_eq!(d[0], vec![2.5]);

        let mut two = FeatureVideo::zeros(2, 4, 4, 1);
        two.cell_mut(0, 1, 1)[0] = 2.0;
        two.cell_mut(1, 1, 1)[0] = 4.0;
        let d = sample_point_features(
            &single_point(vec![o(0, 1.0, 1.0), o(1, 1.0, 1.0)]),
            &two,
            &k,
            1,
        )
        .unwrap();
        assert_eq!(d[0], vec![3.0]);
    }

    #[test]
    fn features_stride_mismatch() {
        let k = PinholeIntrinsics::new(10.0, 10.0, 5.0, 5.0, 12, 12).unwrap();
        let f = FeatureVideo::zeros(1, 2, 2, 1);
        assert!(matches!(
            sample_point_features(&single_point(vec![o(0, 1.0, 1.0)]), &f, &k, 8),
            Err(Error::StrideMismatch { .. })
        ));
        assert!(matches!(
            sample_point_features(&single_point(vec![o(0, 1.0, 1.0)]), &f, &k, 5),
            Err(Error::StrideMismatch { .. })
        ));
    }

    #[test]
    fn features_linear_ramp_matches_analytic() {
        // f(x, y) = a + b x + c y on the 8x8 feature grid of a 64x64 image.
        let (a, b, c) = (0.25, 0.5, -0.125);
        let (w, h, stride) = (64usize, 64usize, 8usize);
        let (fw, fh) = (w / stride, h / stride);
        let mut data = Vec::new();
        for y in 0..fh {
            for x in 0..fw {
                data.push((a + b * x as f64 + c * y as f64) as f32);
            }
        }
        let fv = FeatureVideo::from_raw(1, fh, fw, 1, data).unwrap();
        let k = PinholeIntrinsics::new(50.0, 50.0, 32.0, 32.0, w, h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            // keep the feature coordinate inside [0, fw-1] so no clamping occurs
            let u = rng.random_range(3.5..(w as f64 - 4.5));
            let v = rng.random_range(3.5..(h as f64 - 4.5));
            let d =
                sample_point_features(&single_point(vec![o(0, u, v)]), &fv, &k, stride).unwrap();
            let fx = (u + 0.5) / stride as f64 - 0.5;
            let fy = (v + 0.5) / stride as f64 - 0.5;
            let expected = a + b * fx + c * fy;
            assert!(
                (d[0][0] - expected).abs() < 1e-6,
                "{} vs {expected}",
                d[0][0]
            );
        }
    }

    #[test]
    fn voxel_pool_examples() {
        let pos = [Vec3::new(0.002, 0.0, 0.0), Vec3::new(0.008, 0.0, 0.0)];
        let pay = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let out = voxel_pool(&pos, &pay, 0.01).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].payload, vec![0.5, 0.0, 0.5]);
        assert!((out[0].center - Vec3::new(0.005, 0.005, 0.005)).norm() < 1e-15);

        let pos = [Vec3::new(0.002, 0.0, 0.0), Vec3::new(0.012, 0.0, 0.0)];
        assert_eq!(voxel_pool(&pos, &pay, 0.01).unwrap().len(), 2);
        assert!(voxel_pool(&pos, &pay, 0.0).is_err());
    }

    #[test]
    fn voxel_boundary_goes_to_higher_index() {
        let out = voxel_pool(&[Vec3::new(0.5, -0.5, 0.0)], &[[1.0]], 0.5).unwrap();
        assert_eq!(out[0].index, [1, -1, 0]);
    }

    fn random_cloud(seed: u64, n: usize) -> (Vec<Vec3>, Vec<[f64; 3]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                )
            })
            .collect();
        let pay = (0..n)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        (pos, pay)
    }

    #[test]
    fn voxel_pool_is_permutation_invariant() {
        let (pos, pay) = random_cloud(4, 3000);
        let base = voxel_pool(&pos, &pay, 0.02).unwrap();
        let mut idx: Vec<usize> = (0..pos.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
        let pos2: Vec<Vec3> = idx.iter().map(|&i| pos[i]).collect();
        let pay2: Vec<[f64; 3]> = idx.iter().map(|&i| pay[i]).collect();
        assert_eq!(voxel_pool(&pos2, &pay2, 0.02).unwrap(), base);
    }

    #[test]
    fn voxel_pool_bounds_and_counts() {
        let (pos, pay) = random_cloud(5, 2000);
        let out = voxel_pool(&pos, &pay, 0.03).unwrap();
        assert!(out.len() <= pos.len());
        assert_eq!(out.iter().map(|v| v.count).sum::<usize>(), pos.len());
        assert!(out.windows(2).all(|w| w[0].index < w[1].index));
        for v in &out {
            for k in 0..3 {
                let members: Vec<f64> = pos
                    .iter()
                    .zip(&pay)
                    .filter(|(p, _)| voxel_index(p, 0.03) == v.index)
                    .map(|(_, c)| c[k])
                    .collect();
                let lo = members.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = members.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(v.payload[k] >= lo && v.payload[k] <= hi);
            }
        }
    }

    fn grid_memory() -> SpatialMemory {
        let mut pts = SemidensePoints::default();
        let mut colors = Vec::new();
        let mut desc = Vec::new();
        let mut uid = 0;
        for i in 0..10 {
            for j in 0..10 {
                pts.points.push(SemidensePoint {
                    uid,
                    position: Vec3::new(i as f64 * 0.05 + 0.001, j as f64 * 0.05 + 0.001, 1.0),
                    observations: vec![o(0, 0.0, 0.0)],
                });
                uid += 1;
                colors.push([i as f64 / 10.0, j as f64 / 10.0, 0.5]);
                desc.push(vec![i as f64, j as f64]);
            }
        }
        SpatialMemory::build(
            &pts,
            &colors,
            Some(Descriptors {
                values: &desc,
                dim: 2,
            }),
            0.01,
            0.02,
        )
        .unwrap()
    }

    #[test]
    fn build_is_idempotent() {
        let mem = grid_memory();
        assert_eq!(mem.rgb_voxels.len(), 100);
        assert_eq!(mem.feat_dim, 2);
        assert_eq!(mem.repool().unwrap(), mem);
    }

    #[test]
    fn memory_file_round_trip() {
        let mem = grid_memory();
        let bytes = mem.to_bytes();
        assert_eq!(&bytes[..4], b"E3M1");
        let back = SpatialMemory::from_bytes(&bytes, Path::new("m.e3m")).unwrap();
        assert_eq!(back, mem);
        assert_eq!(back.to_bytes(), bytes);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SpatialMemory::from_bytes(&bad, Path::new("m.e3m")).is_err());
        assert!(SpatialMemory::from_bytes(&bytes[..bytes.len() - 1], Path::new("m.e3m")).is_err());
    }

    #[test]
    fn delete_region_examples() {
        let mem = grid_memory();
        let all = Region::Sphere {
            center: Vec3::new(0.25, 0.25, 1.0),
            radius: 10.0,
        };
        let gone = mem.delete_region(&all).unwrap();
        assert!(gone.rgb_voxels.is_empty() && gone.feat_voxels.is_empty());

        let none = Region::Box {
            min: Vec3::new(5.0, 5.0, 5.0),
            max: Vec3::new(6.0, 6.0, 6.0),
        };
        assert_eq!(mem.delete_region(&none).unwrap(), mem);

        let half = Region::Box {
            min: Vec3::new(-1.0, -1.0, -1.0),
            max: Vec3::new(0.24, 2.0, 2.0),
        };
        let kept = mem.delete_region(&half).unwrap();
        let inside = mem
            .rgb_voxels
            .iter()
            .filter(|v| half.contains(&v.center))
            .count();
        assert_eq!(inside, 50);
        assert_eq!(kept.rgb_voxels.len(), mem.rgb_voxels.len() - inside);
        assert!(kept.rgb_voxels.iter().all(|v| !half.contains(&v.center)));
        // the input is untouched
        assert_eq!(mem.rgb_voxels.len(), 100);

        assert!(mem
            .delete_region(&Region::Sphere {
                center: Vec3::zeros(),
                radius: 0.0
            })
            .is_err());
        assert!(mem
            .delete_region(&Region::Box {
                min: Vec3::new(1.0, 0.0, 0.0),
                max: Vec3::zeros()
            })
            .is_err());
    }

    proptest! {
        #[test]
        fn sequential_deletes_equal_union(
            c1 in proptest::array::uniform3(0.0f64..0.5), r1 in 0.01f64..0.3,
            c2 in proptest::array::uniform3(0.0f64..0.5), r2 in 0.01f64..0.3,
        ) {
            let mem = grid_memory();
            let a = Region::Sphere { center: Vec3::new(c1[0], c1[1], 1.0), radius: r1 };
            let b = Region::Box { min: Vec3::new(c2[0], c2[1], 0.9), max: Vec3::new(c2[0] + r2, c2[1] + r2, 1.1) };
            let seq = mem.delete_region(&a).unwrap().delete_region(&b).unwrap();
            let union: Vec<RgbVoxel> = mem.rgb_voxels.iter().filter(|v| !a.contains(&v.center) && !b.contains(&v.center)).copied().collect();
            prop_assert_eq!(seq.rgb_voxels, union);
        }
    }
}
