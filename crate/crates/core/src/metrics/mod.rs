//! Evaluation metrics over serialized detections, masks and trajectories.

mod camera;
mod detection;
mod hand;
mod hungarian;
mod report;

pub use camera::{camera_error, CameraError};
pub use detection::{
    box_iou, exo_metrics, match_boxes, obj_consistency, read_detections, write_detections,
    BoxMatch, DetectionFrame, ExoScores, ObjScores, TAU_EXO, TAU_OBJ,
};
pub use hand::{
    hand_metrics, read_masks, write_masks, HandScores, MaskFrame, MaskSequence, MIN_MASK_AREA,
};
pub use hungarian::hungarian_assign;
pub use report::MetricReport;

/// F1 from aggregate counts; defined as 1 when there are no positives at all.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}
