//! Rigid and similarity transforms, pinhole projection, the continuous 6D
//! rotation representation and closed-form trajectory alignment.
//!
//! All geometry is `f64`. Poses are camera-to-world.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Points at or in front of this depth (meters) are culled by [`PinholeIntrinsics::project`].
pub const Z_MIN: f64 = 1e-4;

/// Tolerance used when validating rotation matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// A projected point: continuous pixel coordinates plus camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    /// Integer pixel containing the projection.
    pub fn pixel(&self) -> (usize, usize) {
        (self.u.floor() as usize, self.v.floor() as usize)
    }
}

impl PinholeIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive and finite: {self:?}"
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) outside image {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point. Returns `None` when the point is at or
    /// behind [`Z_MIN`] or lands outside `[0, width) x [0, height)`.
    pub fn project(&self, p_cam: &Vec3) -> Option<Projection> {
        let z = p_cam.z;
        if !(z > Z_MIN) {
            return None;
        }
        let u = self.fx * p_cam.x / z + self.cx;
        let v = self.fy * p_cam.y / z + self.cy;
        if !(u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64) {
            return None;
        }
        Some(Projection { u, v, depth: z })
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Intrinsics for an image downsampled by an integer `stride`.
    pub fn scaled(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.width.is_multiple_of(stride) || !self.height.is_multiple_of(stride)
        {
            return Err(Error::StrideMismatch {
                width: self.width,
                height: self.height,
                stride,
            });
        }
        let s = stride as f64;
        Ok(Self {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: self.cx / s,
            cy: self.cy / s,
            width: self.width / stride,
            height: self.height / stride,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    WorldToCamera,
    CameraToWorld,
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_quaternion(qx: f64, qy: f64, qz: f64, qw: f64, translation: Vec3) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(qw, qx, qy, qz));
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Unit quaternion `(qx, qy, qz, qw)` of the rotation, with `qw >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        let (mut x, mut y, mut z, mut w) = (q.i, q.j, q.k, q.w);
        if w < 0.0 {
            x = -x;
            y = -y;
            z = -z;
            w = -w;
        }
        [x, y, z, w]
    }

    pub fn transform_point(&self, p: &Vec3, direction: Direction) -> Vec3 {
        match direction {
            Direction::CameraToWorld => self.camera_to_world(p),
            Direction::WorldToCamera => self.world_to_camera(p),
        }
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        let r = &self.rotation;
        let t = &self.translation;
        Vec3::new(
            r[(0, 0)] * p.x + r[(0, 1)] * p.y + r[(0, 2)] * p.z + t.x,
            r[(1, 0)] * p.x + r[(1, 1)] * p.y + r[(1, 2)] * p.z + t.y,
            r[(2, 0)] * p.x + r[(2, 1)] * p.y + r[(2, 2)] * p.z + t.z,
        )
    }

    /// `R^T (p - t)`, written out so the operation order is fixed.
    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        let r = &self.rotation;
        let dx = p.x - self.translation.x;
        let dy = p.y - self.translation.y;
        let dz = p.z - self.translation.z;
        Vec3::new(
            r[(0, 0)] * dx + r[(1, 0)] * dy + r[(2, 0)] * dz,
            r[(0, 1)] * dx + r[(1, 1)] * dy + r[(2, 1)] * dz,
            r[(0, 2)] * dx + r[(1, 2)] * dy + r[(2, 2)] * dz,
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &PoseSE3) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

pub fn transform_point(pose: &PoseSE3, p: &Vec3, direction: Direction) -> Vec3 {
    pose.transform_point(p, direction)
}

pub fn project_to_pixel(intr: &PinholeIntrinsics, p_cam: &Vec3) -> Option<Projection> {
    intr.project(p_cam)
}

pub fn check_rotation(r: &Mat3) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(
            "rotation has non-finite entries".into(),
        ));
    }
    let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
    let det = r.determinant();
    if ortho > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(Error::InvalidInput(format!(
            "rotation not orthonormal (|R^T R - I| = {ortho:e}, det = {det})"
        )));
    }
    Ok(())
}

/// Similarity transform `x -> s R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Sim3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "Sim(3) scale must be positive, got {scale}"
            )));
        }
        check_rotation(&rotation)?;
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// `(R_S R, s R_S t + t_S)`.
    pub fn apply_pose(&self, pose: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * pose.rotation,
            translation: self.apply_point(&pose.translation),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        Self {
            scale: inv_s,
            rotation: rt,
            translation: -(inv_s * (rt * self.translation)),
        }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Sim3) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.apply_point(&other.translation),
        }
    }
}

pub fn sim3_apply(s: &Sim3, pose: &PoseSE3) -> PoseSE3 {
    s.apply_pose(pose)
}

/// Least-squares similarity transform mapping `source` onto `target`
/// (Umeyama's closed form over the cross-covariance SVD).
pub fn fit_sim3(source: &[Vec3], target: &[Vec3]) -> Result<Sim3> {
    if source.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 3 correspondences, got {n}"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mu_x = source.iter().fold(Vec3::zeros(), |acc, p| acc + p) * inv_n;
    let mu_y = target.iter().fold(Vec3::zeros(), |acc, p| acc + p) * inv_n;

    let mut cov_xx = Mat3::zeros();
    let mut cov_yx = Mat3::zeros();
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let dx = x - mu_x;
        let dy = y - mu_y;
        cov_xx += dx * dx.transpose();
        cov_yx += dy * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov_xx *= inv_n;
    cov_yx *= inv_n;
    var_x *= inv_n;

    // Rank of the centered source covariance must be at least 2.
    let sv = cov_xx.singular_values();
    let (s_max, s_mid) = sorted_top_two(&sv);
    if !(s_max > 0.0) || s_mid <= 1e-12 * s_max {
        return Err(Error::DegenerateConfiguration(
            "source points are coincident or collinear".into(),
        ));
    }
    // The SVD would reproduce the identity only up to rounding.
    if source == target {
        return Ok(Sim3::identity());
    }

    let svd = cov_yx.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(Error::DegenerateConfiguration(
                "SVD failed to converge".into(),
            ))
        }
    };
    let d = svd.singular_values;
    let mut sign = Vec3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let (i_min, _) =
            d.iter().enumerate().fold(
                (0, f64::INFINITY),
                |best, (i, &s)| {
                    if s < best.1 {
                        (i, s)
                    } else {
                        best
                    }
                },
            );
        sign[i_min] = -1.0;
    }
    let rotation = u * Mat3::from_diagonal(&sign) * v_t;
    let scale = d.dot(&sign) / var_x;
    let translation = mu_y - scale * (rotation * mu_x);
    Ok(Sim3 {
        scale,
        rotation,
        translation,
    })
}

fn sorted_top_two(sv: &Vec3) -> (f64, f64) {
    let mut v = [sv.x, sv.y, sv.z];
    v.sort_by(|a, b| b.total_cmp(a));
    (v[0], v[1])
}

/// Geodesic angle between two rotations in degrees, in `[0, 180]`.
///
/// Evaluated as `atan2(sin, cos)` of the relative rotation, where the cosine is
/// the clipped `(tr(R_a^T R_b) - 1) / 2`. This agrees with the arccos form but
/// stays accurate for nearly identical rotations, where arccos loses half the
/// significant digits.
pub fn rotation_error_deg(r_a: &Mat3, r_b: &Mat3) -> f64 {
    let m = r_a.transpose() * r_b;
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let w = Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    let sin = 0.5 * w.norm();
    sin.atan2(cos).to_degrees()
}

/// The literal `(180/pi) arccos(clip((tr(R_a^T R_b) - 1)/2, -1, 1))`.
pub fn rotation_error_deg_acos(r_a: &Mat3, r_b: &Mat3) -> f64 {
    let m = r_a.transpose() * r_b;
    ((m.trace() - 1.0) / 2.0)
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

/// First two columns of a rotation matrix, column-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub fn encode(r: &Mat3) -> Self {
        Rot6D([
            r[(0, 0)],
            r[(1, 0)],
            r[(2, 0)],
            r[(0, 1)],
            r[(1, 1)],
            r[(2, 1)],
        ])
    }

    /// Gram-Schmidt decode.
    pub fn decode(&self) -> Result<Mat3> {
        let a1 = Vec3::new(self.0[0], self.0[1], self.0[2]);
        let a2 = Vec3::new(self.0[3], self.0[4], self.0[5]);
        let n1 = a1.norm();
        if !(n1 >= 1e-12) {
            return Err(Error::DegenerateRotation6D("first column has zero length"));
        }
        let b1 = a1 / n1;
        let proj = a2 - b1.dot(&a2) * b1;
        let n2 = proj.norm();
        if !(n2 >= 1e-12) {
            return Err(Error::DegenerateRotation6D("columns are parallel"));
        }
        let b2 = proj / n2;
        let b3 = b1.cross(&b2);
        Ok(Mat3::from_columns(&[b1, b2, b3]))
    }
}

pub fn rot6d_decode(r: &Rot6D) -> Result<Mat3> {
    r.decode()
}

pub fn rot6d_encode(r: &Mat3) -> Rot6D {
    Rot6D::encode(r)
}

/// Rotation of `angle` radians about a (not necessarily unit) axis.
pub fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

/// Camera-to-world rotation for a camera at `eye` looking at `target`, with
/// `+z` forward, `+x` right and `+y` down in the image.
pub fn look_at(eye: &Vec3, target: &Vec3, world_up: &Vec3) -> Result<Mat3> {
    let forward = target - eye;
    let fnorm = forward.norm();
    if !(fnorm > 0.0) {
        return Err(Error::DegenerateConfiguration(
            "look_at target equals eye".into(),
        ));
    }
    let z = forward / fnorm;
    let right = z.cross(&(-world_up));
    let rnorm = right.norm();
    if !(rnorm > 1e-12) {
        return Err(Error::DegenerateConfiguration(
            "view direction parallel to up".into(),
        ));
    }
    let x = right / rnorm;
    let y = z.cross(&x);
    Ok(Mat3::from_columns(&[x, y, z]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        loop {
            let q = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let n: f64 = q.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            if n > 0.1 && n <= 1.0 {
                return PoseSE3::from_quaternion(
                    q[0] / n,
                    q[1] / n,
                    q[2] / n,
                    q[3] / n,
                    Vec3::zeros(),
                )
                .rotation;
            }
        }
    }

    fn random_pose(rng: &mut impl Rng) -> PoseSE3 {
        PoseSE3 {
            rotation: random_rotation(rng),
            translation: Vec3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ),
        }
    }

    fn k100() -> PinholeIntrinsics {
        PinholeIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn identity_transform_is_noop() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let id = PoseSE3::identity();
        assert_eq!(id.transform_point(&p, Direction::WorldToCamera), p);
        assert_eq!(id.transform_point(&p, Direction::CameraToWorld), p);
    }

    #[test]
    fn camera_origin_maps_to_translation() {
        let pose = PoseSE3::new(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0)).unwrap();
        let w = pose.transform_point(&Vec3::zeros(), Direction::CameraToWorld);
        assert_eq!(w, Vec3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn transform_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let p = Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let back = pose.camera_to_world(&pose.world_to_camera(&p));
            assert!((back - p).norm() < 1e-12, "{}", (back - p).norm());
        }
    }

    #[test]
    fn projection_examples() {
        let k = k100();
        let p = k.project(&Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (50.0, 50.0, 2.0));
        assert!(k.project(&Vec3::new(1.0, 0.0, 2.0)).is_none());
        assert!(k.project(&Vec3::new(0.0, 0.0, -1.0)).is_none());
        assert!(k.project(&Vec3::new(0.0, 0.0, Z_MIN)).is_none());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(PinholeIntrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(PinholeIntrinsics::new(1.0, 1.0, 10.0, 0.0, 10, 10).is_err());
        assert!(PinholeIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 10).is_err());
        assert!(matches!(
            k100().scaled(3),
            Err(Error::StrideMismatch { .. })
        ));
    }

    #[test]
    fn unproject_then_project_round_trips() {
        let k = PinholeIntrinsics::new(320.5, 310.25, 255.5, 250.0, 512, 512).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let u = rng.random_range(0.0..511.0);
            let v = rng.random_range(0.0..511.0);
            let d = rng.random_range(0.1..20.0);
            let p = k.project(&k.unproject(u, v, d)).unwrap();
            assert!((p.u - u).abs() < 1e-9 && (p.v - v).abs() < 1e-9 && (p.depth - d).abs() < 1e-9);
        }
    }

    #[test]
    fn sim3_apply_examples() {
        let s = Sim3::new(2.0, Mat3::identity(), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let pose = PoseSE3::new(Mat3::identity(), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let out = sim3_apply(&s, &pose);
        assert_eq!(out.rotation, Mat3::identity());
        assert_eq!(out.translation, Vec3::new(3.0, 2.0, 2.0));
        assert_eq!(sim3_apply(&Sim3::identity(), &pose), pose);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Sim3::new(1.3, random_rotation(&mut rng), Vec3::new(0.3, -2.0, 1.0)).unwrap();
        let pose = random_pose(&mut rng);
        let back = sim3_apply(&s.inverse(), &sim3_apply(&s, &pose));
        assert!((back.rotation - pose.rotation).abs().max() < 1e-12);
        assert!((back.translation - pose.translation).abs().max() < 1e-12);
    }

    #[test]
    fn fit_sim3_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec3> = (0..20)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let s = fit_sim3(&pts, &pts).unwrap();
        assert!((s.scale - 1.0).abs() < 1e-12);
        assert!((s.rotation - Mat3::identity()).abs().max() < 1e-12);
        assert!(s.translation.abs().max() < 1e-12);
    }

    #[test]
    fn fit_sim3_recovers_known_transform() {
        let known = Sim3::new(
            1.7,
            axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_2),
            Vec3::new(3.0, -1.0, 2.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let src: Vec<Vec3> = (0..50)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        let dst: Vec<Vec3> = src.iter().map(|p| known.apply_point(p)).collect();
        let fit = fit_sim3(&src, &dst).unwrap();
        assert!((fit.scale - known.scale).abs() < 1e-9);
        assert!((fit.rotation - known.rotation).abs().max() < 1e-9);
        assert!((fit.translation - known.translation).abs().max() < 1e-9);
        let rmse = (src
            .iter()
            .zip(&dst)
            .map(|(x, y)| (fit.apply_point(x) - y).norm_squared())
            .sum::<f64>()
            / src.len() as f64)
            .sqrt();
        assert!(rmse <= 1e-9, "rmse {rmse}");
    }

    #[test]
    fn fit_sim3_handles_reflection_case() {
        // A planar set whose best orthogonal fit is a reflection; the result must still be a rotation.
        let src = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
        ];
        let dst: Vec<Vec3> = src.iter().map(|p| Vec3::new(p.x, -p.y, p.z)).collect();
        let fit = fit_sim3(&src, &dst).unwrap();
        assert!((fit.rotation.determinant() - 1.0).abs() < 1e-12);
        check_rotation(&fit.rotation).unwrap();
    }

    #[test]
    fn fit_sim3_degenerate_inputs() {
        let two = vec![Vec3::zeros(), Vec3::x()];
        assert!(matches!(
            fit_sim3(&two, &two),
            Err(Error::DegenerateConfiguration(_))
        ));
        let line: Vec<Vec3> = (0..5)
            .map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0))
            .collect();
        assert!(matches!(
            fit_sim3(&line, &line),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn rotation_error_examples() {
        let id = Mat3::identity();
        assert_eq!(rotation_error_deg(&id, &id), 0.0);
        let rz = axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_2);
        assert!((rotation_error_deg(&id, &rz) - 90.0).abs() < 1e-12);
        let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        assert_eq!(rotation_error_deg(&id, &rx), 180.0);
        assert_eq!(rotation_error_deg_acos(&id, &rx), 180.0);
    }

    #[test]
    fn rotation_error_matches_acos_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let d1 = rotation_error_deg(&a, &b);
            let d2 = rotation_error_deg_acos(&a, &b);
            assert!((d1 - d2).abs() < 1e-6, "{d1} vs {d2}");
        }
    }

    #[test]
    fn rotation_error_symmetric_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..500 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let c = random_rotation(&mut rng);
            let ab = rotation_error_deg(&a, &b);
            assert!((ab - rotation_error_deg(&b, &a)).abs() < 1e-9);
            assert!((0.0..=180.0).contains(&ab));
            assert!(rotation_error_deg(&a, &c) <= ab + rotation_error_deg(&b, &c) + 1e-7);
        }
    }

    #[test]
    fn rot6d_examples() {
        assert_eq!(
            Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).decode().unwrap(),
            Mat3::identity()
        );
        assert_eq!(
            Rot6D([2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).decode().unwrap(),
            Mat3::identity()
        );
        assert!(matches!(
            Rot6D([0.0; 6]).decode(),
            Err(Error::DegenerateRotation6D(_))
        ));
        assert!(matches!(
            Rot6D([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).decode(),
            Err(Error::DegenerateRotation6D(_))
        ));
        let rz = axis_angle(Vec3::z(), 0.3);
        assert_eq!(
            Rot6D::encode(&Mat3::identity()).0,
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
        let d = Rot6D::encode(&rz).decode().unwrap();
        assert!((d - rz).norm() < 1e-12);
    }

    #[test]
    fn rot6d_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let back = Rot6D::encode(&r).decode().unwrap();
            assert!((back - r).norm() < 1e-12);
            assert!((back.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn look_at_points_z_at_target() {
        let eye = Vec3::new(1.0, -1.5, 2.0);
        let target = Vec3::new(0.0, 0.0, 0.0);
        let r = look_at(&eye, &target, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        check_rotation(&r).unwrap();
        let pose = PoseSE3::new(r, eye).unwrap();
        let c = pose.world_to_camera(&target);
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.z > 0.0);
    }

    proptest! {
        #[test]
        fn decode_encode_is_identity_on_6d(a in proptest::array::uniform6(-2.0f64..2.0)) {
            let r6 = Rot6D(a);
            if let Ok(r) = r6.decode() {
                // decode(encode(decode(x))) == decode(x)
                let again = Rot6D::encode(&r).decode().unwrap();
                prop_assert!((again - r).norm() < 1e-12);
            }
        }
    }
}
