//! Hand-crafted kinematic inputs: joint and wrist motion features.

use egomem_core::geometry::rot6d_encode;
use egomem_core::pose::EgoPoseSequence;

use crate::weights::{JOINT_FEATURES, WRIST_FEATURES};

/// First and second differences along time, padding with the first frame so
/// both are zero at `t = 0`.
pub fn temporal_diffs(x: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let diff = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..s.len())
            .map(|t| {
                let prev = &s[t.saturating_sub(1)];
                s[t].iter().zip(prev).map(|(a, b)| a - b).collect()
            })
            .collect()
    };
    let d1 = diff(x);
    let d2 = diff(&d1);
    (d1, d2)
}

/// Per-frame, per-joint `[p, dp, d2p, p - p_head, p - p_pelvis]`.
pub fn build_joint_features(ego: &EgoPoseSequence) -> Vec<Vec<[f64; JOINT_FEATURES]>> {
    let n = ego.len();
    let j_count = ego.num_joints();
    let mut out = vec![vec![[0.0; JOINT_FEATURES]; j_count]; n];
    for j in 0..j_count {
        let track: Vec<Vec<f64>> = ego
            .joints
            .iter()
            .map(|f| f[j].iter().copied().collect())
            .collect();
        let (d1, d2) = temporal_diffs(&track);
        for t in 0..n {
            let p = ego.joints[t][j];
            let head = ego.joints[t][ego.head_index];
            let pelvis = ego.joints[t][ego.pelvis_index];
            let f = &mut out[t][j];
            for a in 0..3 {
                f[a] = p[a];
                f[3 + a] = d1[t][a];
                f[6 + a] = d2[t][a];
                f[9 + a] = p[a] - head[a];
                f[12 + a] = p[a] - pelvis[a];
            }
        }
    }
    out
}

/// Per-frame `[left, right]` of `[p, dp, d2p, r6, dr6, d2r6]`.
pub fn build_wrist_features(ego: &EgoPoseSequence) -> Vec<[[f64; WRIST_FEATURES]; 2]> {
    let n = ego.len();
    let mut out = vec![[[0.0; WRIST_FEATURES]; 2]; n];
    for side in 0..2 {
        let p: Vec<Vec<f64>> = ego
            .wrists
            .iter()
            .map(|w| w[side].translation.iter().copied().collect())
            .collect();
        let r: Vec<Vec<f64>> = ego
            .wrists
            .iter()
            .map(|w| rot6d_encode(&w[side].rotation).0.to_vec())
            .collect();
        let (dp, d2p) = temporal_diffs(&p);
        let (dr, d2r) = temporal_diffs(&r);
        for t in 0..n {
            let f = &mut out[t][side];
            f[0..3].copy_from_slice(&p[t]);
            f[3..6].copy_from_slice(&dp[t]);
            f[6..9].copy_from_slice(&d2p[t]);
            f[9..15].copy_from_slice(&r[t]);
            f[15..21].copy_from_slice(&dr[t]);
            f[21..27].copy_from_slice(&d2r[t]);
        }
    }
    out
}

/// Interleaved sin/cos embedding with base 10000 for positions `1..=n`.
pub fn sinusoidal_embedding(n: usize, d: usize) -> Vec<Vec<f64>> {
    (1..=n)
        .map(|pos| {
            (0..d)
                .map(|c| {
                    let i = (c / 2) as f64;
                    let angle = pos as f64 / 10000f64.powf(2.0 * i / d as f64);
                    if c % 2 == 0 {
                        angle.sin()
                    } else {
                        angle.cos()
                    }
                })
                .collect()
        })
        .collect()
}
