//! Camera trajectory error after a single global similarity alignment.

use crate::error::{Error, Result};
use crate::geometry::{fit_sim3, rotation_error_deg, sim3_apply, Sim3};
use crate::numeric::mean;
use crate::trajectory::CameraTrajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraError {
    pub terr_cm: f64,
    pub rerr_deg: f64,
    /// Per-frame translation error, meters.
    pub trans_m: Vec<f64>,
    pub rot_deg: Vec<f64>,
    pub alignment: Sim3,
}

/// Fits `est -> gt` over translations once, then averages per-frame errors.
pub fn camera_error(gt: &CameraTrajectory, est: &CameraTrajectory) -> Result<CameraError> {
    if gt.len() != est.len() {
        return Err(Error::LengthMismatch {
            left: gt.len(),
            right: est.len(),
        });
    }
    let s = fit_sim3(&est.translations(), &gt.translations())?;
    let mut trans_m = Vec::with_capacity(gt.len());
    let mut rot_deg = Vec::with_capacity(gt.len());
    for (g, e) in gt.poses().iter().zip(est.poses()) {
        let aligned = sim3_apply(&s, e);
        trans_m.push((aligned.translation - g.translation).norm());
        rot_deg.push(rotation_error_deg(&aligned.rotation, &g.rotation));
    }
    Ok(CameraError {
        terr_cm: 100.0 * mean(trans_m.iter().copied()).unwrap_or(0.0),
        rerr_deg: mean(rot_deg.iter().copied()).unwrap_or(0.0),
        trans_m,
        rot_deg,
        alignment: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_angle, PoseSE3, Vec3};

    fn helix(n: usize) -> CameraTrajectory {
        CameraTrajectory::from_poses(
            (0..n)
                .map(|i| {
                    let a = i as f64 * 0.4;
                    PoseSE3 {
                        rotation: axis_angle(Vec3::new(0.0, 1.0, 0.2), a),
                        translation: Vec3::new(a.cos(), 0.1 * a, a.sin()),
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn identity_is_zero() {
        let g = helix(10);
        let e = camera_error(&g, &g).unwrap();
        assert!(e.terr_cm < 1e-12 && e.rerr_deg < 1e-12, "{e:?}");
    }

    #[test]
    fn global_similarity_is_removed() {
        let g = helix(12);
        let s = Sim3::new(
            1.7,
            axis_angle(Vec3::new(1.0, -0.3, 0.5), 2.1),
            Vec3::new(3.0, -1.0, 0.25),
        )
        .unwrap();
        let est = CameraTrajectory::from_poses(g.poses().iter().map(|p| s.apply_pose(p)).collect());
        let e = camera_error(&g, &est).unwrap();
        assert!(
            e.terr_cm <= 1e-7 && e.rerr_deg <= 1e-7,
            "{} {}",
            e.terr_cm,
            e.rerr_deg
        );
    }

    #[test]
    fn collinear_estimate_is_degenerate() {
        let line = CameraTrajectory::from_poses(
            (0..5)
                .map(|i| PoseSE3 {
                    rotation: nalgebra::Matrix3::identity(),
                    translation: Vec3::new(i as f64, 0.0, 0.0),
                })
                .collect(),
        );
        assert!(matches!(
            camera_error(&helix(5), &line),
            Err(Error::DegenerateConfiguration(_))
        ));
    }
}
