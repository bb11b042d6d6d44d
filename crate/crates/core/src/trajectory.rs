//! Camera trajectories (`trajectory.csv`) and intrinsics (`intrinsics.json`).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PinholeIntrinsics, PoseSE3, Vec3};
use crate::io::{field, read_csv, read_json, write_atomic, write_json};

const TRAJECTORY_HEADER: [&str; 8] = ["frame", "tx", "ty", "tz", "qx", "qy", "qz", "qw"];

/// Max deviation of a stored quaternion's norm from 1 before it is rejected.
pub const QUATERNION_NORM_TOL: f64 = 1e-3;

/// Per-frame camera-to-world poses keyed by 0-based, strictly increasing frame index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CameraTrajectory {
    frames: Vec<u32>,
    poses: Vec<PoseSE3>,
    /// Quaternions `(qx, qy, qz, qw)` as read or derived once from the poses;
    /// written back verbatim so read/write cycles are byte-stable.
    quats: Vec<[f64; 4]>,
}

impl CameraTrajectory {
    pub fn new(frames: Vec<u32>, poses: Vec<PoseSE3>) -> Result<Self> {
        if frames.len() != poses.len() {
            return Err(Error::LengthMismatch {
                left: frames.len(),
                right: poses.len(),
            });
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "frame indices must be strictly increasing".into(),
            ));
        }
        let quats = poses.iter().map(PoseSE3::quaternion).collect();
        Ok(Self {
            frames,
            poses,
            quats,
        })
    }

    /// Frames numbered `0..poses.len()`.
    pub fn from_poses(poses: Vec<PoseSE3>) -> Self {
        Self {
            frames: (0..poses.len() as u32).collect(),
            quats: poses.iter().map(PoseSE3::quaternion).collect(),
            poses,
        }
    }

    /// Builds poses from unit quaternions `(qx, qy, qz, qw)`, keeping the
    /// quaternions for output.
    pub fn from_quaternions(
        frames: Vec<u32>,
        quats: Vec<[f64; 4]>,
        translations: Vec<Vec3>,
    ) -> Result<Self> {
        if quats.len() != translations.len() {
            return Err(Error::LengthMismatch {
                left: quats.len(),
                right: translations.len(),
            });
        }
        let poses = quats
            .iter()
            .zip(&translations)
            .map(|(q, t)| PoseSE3::from_quaternion(q[0], q[1], q[2], q[3], *t))
            .collect();
        let mut traj = Self::new(frames, poses)?;
        traj.quats = quats;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn frames(&self) -> &[u32] {
        &self.frames
    }

    pub fn poses(&self) -> &[PoseSE3] {
        &self.poses
    }

    pub fn pose_of_frame(&self, frame: u32) -> Option<&PoseSE3> {
        self.frames
            .binary_search(&frame)
            .ok()
            .map(|i| &self.poses[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &PoseSE3)> {
        self.frames.iter().copied().zip(self.poses.iter())
    }

    pub fn translations(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut frames = Vec::new();
        let mut poses = Vec::new();
        let mut quats = Vec::new();
        read_csv(path, &TRAJECTORY_HEADER, |rec, line| {
            let frame: u32 = field(rec, 0, "frame", path, line)?;
            let mut vals = [0.0f64; 7];
            for (i, v) in vals.iter_mut().enumerate() {
                *v = field(rec, i + 1, TRAJECTORY_HEADER[i + 1], path, line)?;
                if !v.is_finite() {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("non-finite {}", TRAJECTORY_HEADER[i + 1]),
                    ));
                }
            }
            let [tx, ty, tz, qx, qy, qz, qw] = vals;
            let norm = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
            if (norm - 1.0).abs() > QUATERNION_NORM_TOL {
                return Err(Error::parse(
                    path,
                    line,
                    format!("quaternion norm {norm} is not unit"),
                ));
            }
            if let Some(&prev) = frames.last() {
                if frame <= prev {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("frame {frame} not increasing after {prev}"),
                    ));
                }
            }
            frames.push(frame);
            quats.push([qx, qy, qz, qw]);
            poses.push(PoseSE3::from_quaternion(
                qx,
                qy,
                qz,
                qw,
                Vec3::new(tx, ty, tz),
            ));
            Ok(())
        })?;
        Ok(Self {
            frames,
            poses,
            quats,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = TRAJECTORY_HEADER.join(",");
        s.push('\n');
        for ((frame, pose), q) in self.iter().zip(&self.quats) {
            let t = pose.translation;
            let [qx, qy, qz, qw] = *q;
            let _ = writeln!(s, "{frame},{},{},{},{qx},{qy},{qz},{qw}", t.x, t.y, t.z);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }
}

pub fn read_intrinsics(path: &Path) -> Result<PinholeIntrinsics> {
    let intr: PinholeIntrinsics = read_json(path)?;
    intr.validate()
        .map_err(|e| Error::format(path, "intrinsics", e.to_string()))?;
    Ok(intr)
}

pub fn write_intrinsics(path: &Path, intr: &PinholeIntrinsics) -> Result<()> {
    write_json(path, intr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle;

    #[test]
    fn csv_round_trip_preserves_poses() {
        let poses: Vec<PoseSE3> = (0..5)
            .map(|i| PoseSE3 {
                rotation: axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.3 * i as f64),
                translation: Vec3::new(i as f64 * 0.1, -1.25, 3.0),
            })
            .collect();
        let traj = CameraTrajectory::from_poses(poses);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trajectory.csv");
        traj.write_csv(&p).unwrap();
        let back = CameraTrajectory::read_csv(&p).unwrap();
        assert_eq!(back.frames(), traj.frames());
        for (a, b) in back.poses().iter().zip(traj.poses()) {
            assert!((a.rotation - b.rotation).abs().max() < 1e-14);
            assert_eq!(a.translation, b.translation);
        }
        // write(read(write(x))) is byte-stable
        let p2 = dir.path().join("again.csv");
        back.write_csv(&p2).unwrap();
        let again = CameraTrajectory::read_csv(&p2).unwrap();
        assert_eq!(again.to_csv_string(), back.to_csv_string());
    }

    #[test]
    fn rejects_non_unit_quaternion_and_bad_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "frame,tx,ty,tz,qx,qy,qz,qw\n0,0,0,0,0,0,0,1.01\n").unwrap();
        assert!(matches!(
            CameraTrajectory::read_csv(&p),
            Err(Error::Parse { line: 2, .. })
        ));
        std::fs::write(&p, "frame,tx,ty,tz,qx,qy,qz,qw\n0,0,0,0,0,0,0,1.0005\n").unwrap();
        let t = CameraTrajectory::read_csv(&p).unwrap();
        assert!((t.poses()[0].rotation.determinant() - 1.0).abs() < 1e-12);
        std::fs::write(
            &p,
            "frame,tx,ty,tz,qx,qy,qz,qw\n1,0,0,0,0,0,0,1\n1,0,0,0,0,0,0,1\n",
        )
        .unwrap();
        assert!(matches!(
            CameraTrajectory::read_csv(&p),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn intrinsics_json() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("intrinsics.json");
        std::fs::write(
            &p,
            r#"{"fx":100,"fy":100,"cx":50,"cy":50,"width":100,"height":100}"#,
        )
        .unwrap();
        let k = read_intrinsics(&p).unwrap();
        assert_eq!(k.width, 100);
        std::fs::write(
            &p,
            r#"{"fx":-1,"fy":100,"cx":50,"cy":50,"width":100,"height":100}"#,
        )
        .unwrap();
        assert!(read_intrinsics(&p).is_err());
    }
}
