//! Ego and exo human pose controls and skeleton topology assets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_rotation, PoseSE3, Vec3};
use crate::io::{read_json, write_json};

/// Built-in COCO-17 skeleton used for exo people when no topology is given.
pub const COCO17_TOPOLOGY: &str = include_str!("../assets/topology_coco17.json");
/// Built-in 23-segment body skeleton used for the ego wearer.
pub const BODY23_TOPOLOGY: &str = include_str!("../assets/topology_body23.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoPerson {
    pub id: i64,
    /// `[x, y, confidence]` per keypoint, pixels.
    pub keypoints: Vec<[f64; 3]>,
}

/// 2D skeleton tracks of observed people, one list of persons per frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExoPoseSequence {
    pub frames: Vec<Vec<ExoPerson>>,
}

impl ExoPoseSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (t, persons) in self.frames.iter().enumerate() {
            for p in persons {
                for k in &p.keypoints {
                    if !k.iter().all(|v| v.is_finite()) || !(0.0..=1.0).contains(&k[2]) {
                        return Err(Error::InvalidInput(format!(
                            "frame {t}, person {}: keypoint {k:?} must be finite with confidence in [0,1]",
                            p.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Drops every track with the given person id.
    pub fn without_person(&self, id: i64) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|ps| ps.iter().filter(|p| p.id != id).cloned().collect())
                .collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let seq: Self = read_json(path)?;
        seq.validate()
            .map_err(|e| Error::format(path, "exo skeleton", e.to_string()))?;
        Ok(seq)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Camera-frame 3D body joints and 6-DoF wrist poses of the wearer.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoPoseSequence {
    /// `n x J` joint positions, meters, camera frame.
    pub joints: Vec<Vec<Vec3>>,
    /// `n x [left, right]` wrist poses, camera frame.
    pub wrists: Vec<[PoseSE3; 2]>,
    pub head_index: usize,
    pub pelvis_index: usize,
}

#[derive(Serialize, Deserialize)]
struct EgoPoseFile {
    joints: Vec<Vec<[f64; 3]>>,
    /// `(qx, qy, qz, qw, tx, ty, tz)` per wrist.
    wrists: Vec<[[f64; 7]; 2]>,
    head_index: usize,
    pelvis_index: usize,
}

impl EgoPoseSequence {
    pub fn new(
        joints: Vec<Vec<Vec3>>,
        wrists: Vec<[PoseSE3; 2]>,
        head_index: usize,
        pelvis_index: usize,
    ) -> Result<Self> {
        let seq = Self {
            joints,
            wrists,
            head_index,
            pelvis_index,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.joints.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints.len();
        if n == 0 {
            return Err(Error::InvalidInput("ego pose sequence is empty".into()));
        }
        if self.wrists.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: self.wrists.len(),
            });
        }
        let j = self.num_joints();
        if j < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 joints, got {j}"
            )));
        }
        if self.joints.iter().any(|f| f.len() != j) {
            return Err(Error::ShapeMismatch(
                "joint count varies across frames".into(),
            ));
        }
        if self.head_index >= j || self.pelvis_index >= j || self.head_index == self.pelvis_index {
            return Err(Error::InvalidInput(format!(
                "head/pelvis indices ({}, {}) must be distinct and < {j}",
                self.head_index, self.pelvis_index
            )));
        }
        if !self
            .joints
            .iter()
            .flatten()
            .all(|p| p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidInput("non-finite joint position".into()));
        }
        for w in self.wrists.iter().flatten() {
            check_rotation(&w.rotation)?;
            if !w.translation.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput("non-finite wrist translation".into()));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let raw: EgoPoseFile = read_json(path)?;
        let joints = raw
            .joints
            .iter()
            .map(|f| f.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
            .collect();
        let wrists = raw
            .wrists
            .iter()
            .map(|pair| {
                pair.map(|w| {
                    let [qx, qy, qz, qw, tx, ty, tz] = w;
                    PoseSE3::from_quaternion(qx, qy, qz, qw, Vec3::new(tx, ty, tz))
                })
            })
            .collect();
        Self::new(joints, wrists, raw.head_index, raw.pelvis_index)
            .map_err(|e| Error::format(path, "ego skeleton", e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let raw = EgoPoseFile {
            joints: self
                .joints
                .iter()
                .map(|f| f.iter().map(|p| [p.x, p.y, p.z]).collect())
                .collect(),
            wrists: self
                .wrists
                .iter()
                .map(|pair| {
                    pair.map(|w| {
                        let [qx, qy, qz, qw] = w.quaternion();
                        [
                            qx,
                            qy,
                            qz,
                            qw,
                            w.translation.x,
                            w.translation.y,
                            w.translation.z,
                        ]
                    })
                })
                .collect(),
            head_index: self.head_index,
            pelvis_index: self.pelvis_index,
        };
        write_json(path, &raw)
    }
}

/// Skeleton edges with a per-limb palette (8-bit RGB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub edges: Vec<[usize; 2]>,
    pub palette: Vec<[u8; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pelvis_index: Option<usize>,
}

impl Topology {
    pub fn coco17() -> Self {
        serde_json::from_str(COCO17_TOPOLOGY).expect("built-in topology parses")
    }

    pub fn body23() -> Self {
        serde_json::from_str(BODY23_TOPOLOGY).expect("built-in topology parses")
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Color of edge `i`, cycling through the palette; white when empty.
    pub fn edge_color(&self, i: usize) -> [f32; 3] {
        if self.palette.is_empty() {
            return [1.0; 3];
        }
        self.palette[i % self.palette.len()].map(|c| c as f32 / 255.0)
    }

    pub fn check_joint_count(&self, joints: usize) -> Result<()> {
        match self.edges.iter().flatten().find(|&&j| j >= joints) {
            Some(j) => Err(Error::InvalidInput(format!(
                "topology edge references joint {j}, but only {joints} exist"
            ))),
            None => Ok(()),
        }
    }
}
