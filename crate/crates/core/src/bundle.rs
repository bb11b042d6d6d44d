//! Assembly of the view-aligned conditioning signals for one target clip.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureVideo, OccupancyMask};
use crate::geometry::PinholeIntrinsics;
use crate::image::{write_video, Rgb, RgbImage};
use crate::io::{read_maybe_gz, write_atomic, LeReader, LeWriter};
use crate::memory::{SpatialMemory, DEFAULT_FEATURE_STRIDE};
use crate::pose::{EgoPoseSequence, ExoPoseSequence, Topology};
use crate::raster::{
    rasterize_ego_overlay, rasterize_exo_skeletons, DrawStyle, DEFAULT_AXIS_LENGTH,
};
use crate::render::{render_feature_splat, render_rgb_splat};
use crate::trajectory::CameraTrajectory;

const TOKENS_MAGIC: &[u8; 4] = b"E3T1";

/// `(n + K) x D` f32 token matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTokens {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl PoseTokens {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {rows}x{cols} tokens",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "pose tokens contain non-finite values".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = LeWriter::new(TOKENS_MAGIC);
        w.u32(self.rows as u32);
        w.u32(self.cols as u32);
        for &v in &self.data {
            w.f32(v);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = LeReader::new(bytes, TOKENS_MAGIC, path, "tokens")?;
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let data = r.f32_vec(rows * cols)?;
        r.finish()?;
        Self::new(rows, cols, data).map_err(|e| Error::format(path, "tokens", e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_maybe_gz(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

/// Anything that turns an ego pose sequence into persistent pose tokens.
pub trait PoseTokenizer: Sync {
    fn tokenize(&self, ego: &EgoPoseSequence) -> Result<PoseTokens>;
}

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub splat_radius: u32,
    pub background: Rgb,
    pub stride: usize,
    pub axis_length: f64,
    pub style: DrawStyle,
    pub exo_topology: Topology,
    pub ego_topology: Topology,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            splat_radius: 0,
            background: [0.0; 3],
            stride: DEFAULT_FEATURE_STRIDE,
            axis_length: DEFAULT_AXIS_LENGTH,
            style: DrawStyle::default(),
            exo_topology: Topology::coco17(),
            ego_topology: Topology::body23(),
        }
    }
}

pub struct BundleInputs<'a> {
    pub memory: &'a SpatialMemory,
    pub trajectory: &'a CameraTrajectory,
    pub intrinsics: &'a PinholeIntrinsics,
    pub exo: Option<&'a ExoPoseSequence>,
    pub ego: Option<&'a EgoPoseSequence>,
    pub last_context_frame: Option<&'a RgbImage>,
    pub tokenizer: Option<&'a dyn PoseTokenizer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    /// Point splats with pose drawings on top.
    pub rgb_control: Vec<RgbImage>,
    /// Absent when the memory has no descriptors.
    pub feature_render: Option<(FeatureVideo, OccupancyMask)>,
    pub last_context_frame: Option<RgbImage>,
    /// Absent when no ego sequence or tokenizer is supplied.
    pub pose_tokens: Option<PoseTokens>,
}

pub fn assemble_conditioning_bundle(
    inputs: &BundleInputs,
    opts: &RenderOptions,
) -> Result<ConditioningBundle> {
    let n = inputs.trajectory.len();
    if n == 0 {
        return Err(Error::InvalidInput("target trajectory is empty".into()));
    }
    let check = |len: usize| {
        if len != n {
            Err(Error::LengthMismatch {
                left: n,
                right: len,
            })
        } else {
            Ok(())
        }
    };
    let mut rgb = render_rgb_splat(
        inputs.memory,
        inputs.trajectory,
        inputs.intrinsics,
        opts.splat_radius,
        opts.background,
    );
    if let Some(exo) = inputs.exo {
        check(exo.len())?;
        rasterize_exo_skeletons(&mut rgb, exo, &opts.exo_topology, &opts.style)?;
    }
    if let Some(ego) = inputs.ego {
        check(ego.len())?;
        rasterize_ego_overlay(
            &mut rgb,
            ego,
            inputs.intrinsics,
            &opts.ego_topology,
            opts.axis_length,
            &opts.style,
        )?;
    }
    let feature_render = if inputs.memory.feat_dim > 0 {
        Some(render_feature_splat(
            inputs.memory,
            inputs.trajectory,
            inputs.intrinsics,
            opts.stride,
        )?)
    } else {
        None
    };
    let pose_tokens = match (inputs.ego, inputs.tokenizer) {
        (Some(ego), Some(tok)) => Some(tok.tokenize(ego)?),
        _ => None,
    };
    Ok(ConditioningBundle {
        rgb_control: rgb,
        feature_render,
        last_context_frame: inputs.last_context_frame.cloned(),
        pose_tokens,
    })
}

impl ConditioningBundle {
    /// Writes `frame_%05d.ppm`, `featmap.bin`, `mask.bin`, `tokens.bin` and
    /// `last_context.ppm` (each only when present) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_video(dir, &self.rgb_control)?;
        if let Some((feat, mask)) = &self.feature_render {
            feat.write(&dir.join("featmap.bin"))?;
            mask.write(&dir.join("mask.bin"))?;
        }
        if let Some(tokens) = &self.pose_tokens {
            tokens.write(&dir.join("tokens.bin"))?;
        }
        if let Some(img) = &self.last_context_frame {
            img.write_ppm(&dir.join("last_context.ppm"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PoseSE3, Vec3};
    use crate::memory::{FeatVoxel, RgbVoxel};

    struct ConstTokenizer;

    impl PoseTokenizer for ConstTokenizer {
        fn tokenize(&self, ego: &EgoPoseSequence) -> Result<PoseTokens> {
            let rows = ego.len() + 4;
            PoseTokens::new(rows, 6, (0..rows * 6).map(|i| i as f32).collect())
        }
    }

    fn scene() -> (SpatialMemory, CameraTrajectory, PinholeIntrinsics) {
        let mut mem = SpatialMemory::empty(0.01, 0.02);
        for i in 0..20 {
            let c = Vec3::new(i as f64 * 0.02 - 0.2, 0.0, 1.0);
            mem.rgb_voxels.push(RgbVoxel {
                center: c,
                color: [0.5, i as f32 / 20.0, 0.0],
            });
            mem.feat_voxels.push(FeatVoxel {
                center: c,
                descriptor: vec![i as f32, 1.0],
            });
        }
        mem.feat_dim = 2;
        let traj = CameraTrajectory::from_poses(vec![PoseSE3::identity(); 3]);
        let k = PinholeIntrinsics::new(40.0, 40.0, 16.0, 16.0, 32, 32).unwrap();
        (mem, traj, k)
    }

    #[test]
    fn tokens_round_trip() {
        let t = PoseTokens::new(2, 3, vec![1.0, -2.5, 3.0, 0.0, 1e-7, 9.0]).unwrap();
        let back = PoseTokens::from_bytes(&t.to_bytes(), Path::new("tokens.bin")).unwrap();
        assert_eq!(back, t);
        assert!(PoseTokens::new(1, 1, vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn bundle_without_poses_is_plain_splat() {
        let (mem, traj, k) = scene();
        let ego_hidden = EgoPoseSequence::new(
            vec![vec![Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.1, -1.0)]; 3],
            vec![
                [PoseSE3 {
                    rotation: nalgebra::Matrix3::identity(),
                    translation: Vec3::new(0.0, 0.0, -1.0),
                }; 2];
                3
            ],
            0,
            1,
        )
        .unwrap();
        let exo = ExoPoseSequence {
            frames: vec![vec![]; 3],
        };
        let opts = RenderOptions {
            ego_topology: Topology {
                edges: vec![[0, 1]],
                palette: vec![],
                head_index: None,
                pelvis_index: None,
            },
            ..RenderOptions::default()
        };
        let inputs = BundleInputs {
            memory: &mem,
            trajectory: &traj,
            intrinsics: &k,
            exo: Some(&exo),
            ego: Some(&ego_hidden),
            last_context_frame: None,
            tokenizer: Some(&ConstTokenizer),
        };
        let b = assemble_conditioning_bundle(&inputs, &opts).unwrap();
        assert_eq!(
            b.rgb_control,
            render_rgb_splat(&mem, &traj, &k, 0, [0.0; 3])
        );
        assert_eq!(b.pose_tokens.as_ref().unwrap().rows, 7);
        let (f, _) = b.feature_render.as_ref().unwrap();
        assert_eq!((f.n_frames(), f.height(), f.width()), (3, 4, 4));

        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let again = tempfile::tempdir().unwrap();
        assemble_conditioning_bundle(&inputs, &opts)
            .unwrap()
            .write(again.path())
            .unwrap();
        for name in [
            "frame_00000.ppm",
            "frame_00002.ppm",
            "featmap.bin",
            "mask.bin",
            "tokens.bin",
        ] {
            let a = std::fs::read(dir.path().join(name)).unwrap();
            assert_eq!(a, std::fs::read(again.path().join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn length_mismatch_is_reported() {
        let (mem, traj, k) = scene();
        let exo = ExoPoseSequence {
            frames: vec![vec![]; 2],
        };
        let inputs = BundleInputs {
            memory: &mem,
            trajectory: &traj,
            intrinsics: &k,
            exo: Some(&exo),
            ego: None,
            last_context_frame: None,
            tokenizer: None,
        };
        assert!(matches!(
            assemble_conditioning_bundle(&inputs, &RenderOptions::default()),
            Err(Error::LengthMismatch { left: 3, right: 2 })
        ));
    }
}
