//! Box-level object consistency and exo person pose metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{f1_score, hungarian_assign};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::numeric::mean;

pub const TAU_OBJ: f64 = 0.5;
pub const TAU_EXO: f64 = 0.2;
/// Normalized keypoint error must be strictly below this to count as correct.
pub const PCK_THRESHOLD: f64 = 0.10;

/// One frame of detections: `[x0, y0, x1, y1]` boxes with optional
/// per-box `[x, y, confidence]` keypoints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub boxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<Vec<[f64; 3]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl DetectionFrame {
    pub fn from_boxes(boxes: Vec<[f64; 4]>) -> Self {
        Self {
            boxes,
            ..Self::default()
        }
    }

    fn validate(&self, frame: usize) -> Result<()> {
        for b in &self.boxes {
            if !b.iter().all(|v| v.is_finite()) || b[0] > b[2] || b[1] > b[3] {
                return Err(Error::InvalidInput(format!(
                    "frame {frame}: invalid box {b:?}"
                )));
            }
        }
        if let Some(k) = &self.keypoints {
            if k.len() != self.boxes.len() {
                return Err(Error::InvalidInput(format!(
                    "frame {frame}: {} keypoint sets for {} boxes",
                    k.len(),
                    self.boxes.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionFrame>> {
    let frames: Vec<DetectionFrame> = read_json(path)?;
    for (t, f) in frames.iter().enumerate() {
        f.validate(t)
            .map_err(|e| Error::format(path, "detections", e.to_string()))?;
    }
    Ok(frames)
}

pub fn write_detections(path: &Path, frames: &[DetectionFrame]) -> Result<()> {
    write_json(path, &frames)
}

fn area(b: &[f64; 4]) -> f64 {
    (b[2] - b[0]) * (b[3] - b[1])
}

/// Continuous-coordinate IoU; zero when the union has no area.
pub fn box_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMatch {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
}

/// Hungarian matching on `1 - IoU`, keeping pairs with `IoU >= tau`.
pub fn match_boxes(gt: &[[f64; 4]], pred: &[[f64; 4]], tau: f64) -> Vec<BoxMatch> {
    if gt.is_empty() || pred.is_empty() {
        return Vec::new();
    }
    let iou: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| pred.iter().map(|p| box_iou(g, p)).collect())
        .collect();
    let cost: Vec<Vec<f64>> = iou
        .iter()
        .map(|r| r.iter().map(|v| 1.0 - v).collect())
        .collect();
    hungarian_assign(&cost)
        .into_iter()
        .filter(|&(i, j)| iou[i][j] >= tau)
        .map(|(i, j)| BoxMatch {
            gt: i,
            pred: j,
            iou: iou[i][j],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    fn add(&mut self, matched: usize, n_gt: usize, n_pred: usize) {
        self.tp += matched;
        self.fp += n_pred - matched;
        self.fn_ += n_gt - matched;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjScores {
    pub f1: f64,
    pub miou: f64,
    pub per_frame: Vec<f64>,
    pub counts: Counts,
}

fn check_lengths(gt: usize, pred: usize) -> Result<()> {
    if gt != pred {
        return Err(Error::LengthMismatch {
            left: gt,
            right: pred,
        });
    }
    Ok(())
}

pub fn obj_consistency(gt: &[DetectionFrame], pred: &[DetectionFrame]) -> Result<ObjScores> {
    check_lengths(gt.len(), pred.len())?;
    let mut counts = Counts::default();
    let mut per_frame = Vec::with_capacity(gt.len());
    for (g, p) in gt.iter().zip(pred) {
        let matches = match_boxes(&g.boxes, &p.boxes, TAU_OBJ);
        counts.add(matches.len(), g.boxes.len(), p.boxes.len());
        let m_t = if !matches.is_empty() {
            mean(matches.iter().map(|m| m.iou)).unwrap_or(0.0)
        } else if g.boxes.len() + p.boxes.len() > 0 {
            0.0
        } else {
            1.0
        };
        per_frame.push(m_t);
    }
    Ok(ObjScores {
        f1: f1_score(counts.tp, counts.fp, counts.fn_),
        miou: mean(per_frame.iter().copied()).unwrap_or(1.0),
        per_frame,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExoScores {
    pub f1: f64,
    /// `None` when no valid matched keypoints exist.
    pub pck10: Option<f64>,
    pub normalized_mpjpe: Option<f64>,
    pub counts: Counts,
    pub valid_keypoints: usize,
}

fn keypoints_of(f: &DetectionFrame, frame: usize) -> Result<&[Vec<[f64; 3]>]> {
    match &f.keypoints {
        Some(k) if k.len() == f.boxes.len() => Ok(k),
        _ if f.boxes.is_empty() => Ok(&[]),
        _ => Err(Error::MissingKeypoints {
            frame,
            detection: 0,
        }),
    }
}

/// A keypoint pair counts when both sides are detected (confidence > 0) and
/// the GT box has positive area.
pub fn exo_metrics(gt: &[DetectionFrame], pred: &[DetectionFrame]) -> Result<ExoScores> {
    check_lengths(gt.len(), pred.len())?;
    let mut counts = Counts::default();
    let mut errors = Vec::new();
    for (t, (g, p)) in gt.iter().zip(pred).enumerate() {
        let (gk, pk) = (keypoints_of(g, t)?, keypoints_of(p, t)?);
        let matches = match_boxes(&g.boxes, &p.boxes, TAU_EXO);
        counts.add(matches.len(), g.boxes.len(), p.boxes.len());
        for m in &matches {
            let a_m = area(&g.boxes[m.gt]);
            let (kg, kp) = (&gk[m.gt], &pk[m.pred]);
            if kg.len() != kp.len() {
                return Err(Error::ShapeMismatch(format!(
                    "frame {t}: matched pair has {} vs {} keypoints",
                    kg.len(),
                    kp.len()
                )));
            }
            if a_m <= 0.0 {
                continue;
            }
            let norm = a_m.sqrt();
            for (a, b) in kg.iter().zip(kp) {
                if a[2] > 0.0 && b[2] > 0.0 {
                    errors.push((b[0] - a[0]).hypot(b[1] - a[1]) / norm);
                }
            }
        }
    }
    let correct = errors.iter().filter(|&&e| e < PCK_THRESHOLD).count();
    Ok(ExoScores {
        f1: f1_score(counts.tp, counts.fp, counts.fn_),
        pck10: (!errors.is_empty()).then(|| correct as f64 / errors.len() as f64),
        normalized_mpjpe: mean(errors.iter().copied()),
        counts,
        valid_keypoints: errors.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(boxes: Vec<[f64; 4]>) -> DetectionFrame {
        DetectionFrame::from_boxes(boxes)
    }

    fn person(b: [f64; 4], kps: Vec<[f64; 3]>) -> DetectionFrame {
        DetectionFrame {
            boxes: vec![b],
            keypoints: Some(vec![kps]),
            ..DetectionFrame::default()
        }
    }

    #[test]
    fn iou_basics() {
        let a = [0.0, 0.0, 10.0, 10.0];
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &[5.0, 0.0, 15.0, 10.0]), 50.0 / 150.0);
        assert_eq!(box_iou(&a, &[20.0, 20.0, 30.0, 30.0]), 0.0);
        assert_eq!(box_iou(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn piecewise_m_t() {
        let b = [0.0, 0.0, 10.0, 10.0];
        let shifted = [2.0, 0.0, 12.0, 10.0];
        let gt = vec![frame(vec![b]), frame(vec![b]), frame(vec![])];
        let pred = vec![frame(vec![shifted]), frame(vec![]), frame(vec![])];
        let s = obj_consistency(&gt, &pred).unwrap();
        assert_eq!(s.per_frame, vec![80.0 / 120.0, 0.0, 1.0]);
        assert_eq!(
            s.counts,
            Counts {
                tp: 1,
                fp: 0,
                fn_: 1
            }
        );
        assert_eq!(s.f1, 2.0 / 3.0);
    }

    #[test]
    fn identical_detections_score_one() {
        let gt = vec![
            frame(vec![[0.0, 0.0, 5.0, 5.0], [10.0, 10.0, 20.0, 30.0]]),
            frame(vec![]),
            frame(vec![[3.0, 4.0, 5.0, 6.0]]),
        ];
        let s = obj_consistency(&gt, &gt).unwrap();
        assert_eq!((s.f1, s.miou), (1.0, 1.0));
        assert!(obj_consistency(&gt, &gt[..2]).is_err());
    }

    #[test]
    fn below_threshold_match_is_dropped() {
        let gt = vec![frame(vec![[0.0, 0.0, 10.0, 10.0]])];
        let pred = vec![frame(vec![[6.0, 0.0, 16.0, 10.0]])];
        let s = obj_consistency(&gt, &pred).unwrap();
        assert_eq!(
            s.counts,
            Counts {
                tp: 0,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(s.per_frame, vec![0.0]);
    }

    #[test]
    fn pck_is_strict() {
        let b = [0.0, 0.0, 100.0, 100.0];
        let gt = vec![person(b, vec![[50.0, 50.0, 1.0], [20.0, 20.0, 1.0]])];
        let off = |d: f64| vec![person(b, vec![[50.0 + d, 50.0, 1.0], [20.0, 20.0, 1.0]])];
        let s = exo_metrics(&gt, &off(5.0)).unwrap();
        assert_eq!(s.pck10, Some(1.0));
        let s = exo_metrics(&gt, &off(10.0)).unwrap();
        assert_eq!(s.pck10, Some(0.5));
        assert_eq!(s.normalized_mpjpe, Some(0.05));
        let s = exo_metrics(&gt, &off(9.99)).unwrap();
        assert_eq!(s.pck10, Some(1.0));
    }

    #[test]
    fn perfect_and_undefined() {
        let b = [10.0, 10.0, 30.0, 60.0];
        let gt = vec![person(b, vec![[12.0, 20.0, 0.9]; 5]), frame(vec![])];
        let s = exo_metrics(&gt, &gt).unwrap();
        assert_eq!(
            (s.f1, s.pck10, s.normalized_mpjpe),
            (1.0, Some(1.0), Some(0.0))
        );
        let empty = vec![frame(vec![]); 2];
        let s = exo_metrics(&empty, &empty).unwrap();
        assert_eq!((s.f1, s.pck10, s.normalized_mpjpe), (1.0, None, None));
        assert!(matches!(
            exo_metrics(&[frame(vec![b])], &[frame(vec![b])]),
            Err(Error::MissingKeypoints { frame: 0, .. })
        ));
    }

    #[test]
    fn f1_and_miou_symmetric() {
        let gt = vec![
            frame(vec![[0.0, 0.0, 10.0, 10.0], [50.0, 50.0, 60.0, 70.0]]),
            frame(vec![[1.0, 1.0, 4.0, 4.0]]),
        ];
        let pred = vec![
            frame(vec![[1.0, 0.0, 11.0, 10.0]]),
            frame(vec![[1.0, 1.0, 4.0, 3.5], [8.0, 8.0, 9.0, 9.0]]),
        ];
        let a = obj_consistency(&gt, &pred).unwrap();
        let b = obj_consistency(&pred, &gt).unwrap();
        assert_eq!((a.f1, a.miou), (b.f1, b.miou));
    }

    #[test]
    fn detections_json() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("detections.json");
        std::fs::write(
            &p,
            r#"[{"boxes":[[0,0,4,4]],"scores":[0.9],"keypoints":[[[1,1,0.8]]]},{"boxes":[]}]"#,
        )
        .unwrap();
        let d = read_detections(&p).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].keypoints.as_ref().unwrap()[0][0], [1.0, 1.0, 0.8]);
        std::fs::write(&p, r#"[{"boxes":[[5,0,4,4]]}]"#).unwrap();
        assert!(read_detections(&p).is_err());
    }
}
