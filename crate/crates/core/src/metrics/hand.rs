//! Hand presence and mask overlap over run-length encoded binary masks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::detection::Counts;
use super::f1_score;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::numeric::mean;

/// Smallest connected component kept by the optional area filter, pixels.
pub const MIN_MASK_AREA: usize = 1536;

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskFrame {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl MaskFrame {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    /// Runs alternate 0s and 1s, starting with 0s.
    pub fn from_rle(height: usize, width: usize, runs: &[usize]) -> Result<Self> {
        let total: usize = runs.iter().sum();
        if total != height * width {
            return Err(Error::ShapeMismatch(format!(
                "run lengths sum to {total}, expected {height}x{width}"
            )));
        }
        let mut data = Vec::with_capacity(total);
        for (i, &r) in runs.iter().enumerate() {
            data.extend(std::iter::repeat_n(i % 2 == 1, r));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn to_rle(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for &v in &self.data {
            if v != current {
                runs.push(len);
                current = v;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        runs
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Drops 4-connected components smaller than `min_area` pixels.
    pub fn filter_small_components(&self, min_area: usize) -> Self {
        let (h, w) = (self.height, self.width);
        let mut out = self.clone();
        let mut seen = vec![false; h * w];
        let mut stack = Vec::new();
        let mut component = Vec::new();
        for start in 0..h * w {
            if !self.data[start] || seen[start] {
                continue;
            }
            component.clear();
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                component.push(k);
                let (y, x) = (k / w, k % w);
                let mut visit = |nk: usize| {
                    if self.data[nk] && !seen[nk] {
                        seen[nk] = true;
                        stack.push(nk);
                    }
                };
                if x > 0 {
                    visit(k - 1);
                }
                if x + 1 < w {
                    visit(k + 1);
                }
                if y > 0 {
                    visit(k - w);
                }
                if y + 1 < h {
                    visit(k + w);
                }
            }
            if component.len() < min_area {
                for &k in &component {
                    out.data[k] = false;
                }
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct MaskFile {
    height: usize,
    width: usize,
    frames: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<MaskFrame>,
}

pub fn read_masks(path: &Path) -> Result<MaskSequence> {
    let raw: MaskFile = read_json(path)?;
    let frames = raw
        .frames
        .iter()
        .enumerate()
        .map(|(t, runs)| {
            MaskFrame::from_rle(raw.height, raw.width, runs)
                .map_err(|e| Error::format(path, "masks", format!("frame {t}: {e}")))
        })
        .collect::<Result<_>>()?;
    Ok(MaskSequence {
        height: raw.height,
        width: raw.width,
        frames,
    })
}

pub fn write_masks(path: &Path, masks: &MaskSequence) -> Result<()> {
    let raw = MaskFile {
        height: masks.height,
        width: masks.width,
        frames: masks.frames.iter().map(MaskFrame::to_rle).collect(),
    };
    write_json(path, &raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandScores {
    pub f1: f64,
    pub miou: f64,
    pub per_frame: Vec<f64>,
    pub counts: Counts,
}

/// Presence F1 and per-frame IoU; a frame where both masks are empty has IoU 1.
/// With `min_area`, small components are removed from both sides first.
pub fn hand_metrics(
    gt: &[MaskFrame],
    pred: &[MaskFrame],
    min_area: Option<usize>,
) -> Result<HandScores> {
    if gt.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gt.len(),
            right: pred.len(),
        });
    }
    let mut counts = Counts::default();
    let mut per_frame = Vec::with_capacity(gt.len());
    for (t, (g, p)) in gt.iter().zip(pred).enumerate() {
        if (g.height, g.width) != (p.height, p.width) {
            return Err(Error::ResolutionMismatch {
                frame: t,
                left: (g.width, g.height),
                right: (p.width, p.height),
            });
        }
        let filtered;
        let (g, p) = match min_area {
            Some(a) => {
                filtered = (g.filter_small_components(a), p.filter_small_components(a));
                (&filtered.0, &filtered.1)
            }
            None => (g, p),
        };
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in g.data.iter().zip(&p.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        let (z, z_hat) = (g.data.iter().any(|&v| v), p.data.iter().any(|&v| v));
        counts.tp += (z && z_hat) as usize;
        counts.fp += (!z && z_hat) as usize;
        counts.fn_ += (z && !z_hat) as usize;
        per_frame.push(if union > 0 {
            inter as f64 / union as f64
        } else {
            1.0
        });
    }
    Ok(HandScores {
        f1: f1_score(counts.tp, counts.fp, counts.fn_),
        miou: mean(per_frame.iter().copied()).unwrap_or(1.0),
        per_frame,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half(h: usize, w: usize) -> MaskFrame {
        let mut m = MaskFrame::empty(h, w);
        for y in 0..h {
            for x in 0..w / 2 {
                m.data[y * w + x] = true;
            }
        }
        m
    }

    #[test]
    fn rle_round_trip() {
        let m = half(4, 6);
        let runs = m.to_rle();
        assert_eq!(runs[0], 0);
        assert_eq!(MaskFrame::from_rle(4, 6, &runs).unwrap(), m);
        assert_eq!(MaskFrame::empty(2, 2).to_rle(), vec![4]);
        assert!(MaskFrame::from_rle(2, 2, &[1, 2]).is_err());
    }

    #[test]
    fn conventions() {
        let e = vec![MaskFrame::empty(4, 4); 3];
        let s = hand_metrics(&e, &e, None).unwrap();
        assert_eq!((s.f1, s.miou), (1.0, 1.0));
        let m = vec![half(4, 4); 2];
        let s = hand_metrics(&m, &m, None).unwrap();
        assert_eq!((s.f1, s.miou), (1.0, 1.0));
        let full = vec![MaskFrame::from_rle(4, 4, &[0, 16]).unwrap(); 2];
        let s = hand_metrics(&m, &full, None).unwrap();
        assert_eq!(s.per_frame, vec![0.5, 0.5]);
    }

    #[test]
    fn presence_counts() {
        let gt = vec![half(2, 2), MaskFrame::empty(2, 2), half(2, 2)];
        let pred = vec![half(2, 2), half(2, 2), MaskFrame::empty(2, 2)];
        let s = hand_metrics(&gt, &pred, None).unwrap();
        assert_eq!(
            s.counts,
            Counts {
                tp: 1,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(s.f1, 0.5);
        assert_eq!(s.per_frame, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            hand_metrics(&gt, &[half(2, 4), half(2, 2), half(2, 2)], None),
            Err(Error::ResolutionMismatch { frame: 0, .. })
        ));
    }

    #[test]
    fn small_components_are_filtered() {
        let mut m = MaskFrame::empty(10, 10);
        for k in [0, 1, 10, 11] {
            m.data[k] = true;
        }
        m.data[99] = true;
        let f = m.filter_small_components(2);
        assert_eq!(f.area(), 4);
        assert!(!f.data[99]);
        let s = hand_metrics(
            &[m.clone()],
            &[MaskFrame::empty(10, 10)],
            Some(MIN_MASK_AREA),
        )
        .unwrap();
        assert_eq!((s.f1, s.miou), (1.0, 1.0));
    }
}
