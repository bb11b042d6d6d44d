//! `report.json` / `report.csv` emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::{CameraError, ExoScores, HandScores, ObjScores};
use crate::error::Result;
use crate::io::{write_atomic, write_json};

/// Scores of whichever metric groups were evaluated.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub camera: Option<CameraError>,
    pub obj: Option<ObjScores>,
    pub hand: Option<HandScores>,
    pub exo: Option<ExoScores>,
}

/// `(name, raw value, table scale)` in column order.
type Scalar = (&'static str, Option<f64>, f64);

impl MetricReport {
    fn scalars(&self) -> Vec<Scalar> {
        let cam = self.camera.as_ref();
        let obj = self.obj.as_ref();
        let hand = self.hand.as_ref();
        let exo = self.exo.as_ref();
        vec![
            ("terr_cm", cam.map(|c| c.terr_cm), 1.0),
            ("rerr_deg", cam.map(|c| c.rerr_deg), 1.0),
            ("obj_f1", obj.map(|o| o.f1), 100.0),
            ("obj_miou", obj.map(|o| o.miou), 100.0),
            ("exo_f1", exo.map(|e| e.f1), 100.0),
            ("pck10", exo.and_then(|e| e.pck10), 100.0),
            (
                "normalized_mpjpe",
                exo.and_then(|e| e.normalized_mpjpe),
                1.0,
            ),
            ("hand_f1", hand.map(|h| h.f1), 100.0),
            ("hand_miou", hand.map(|h| h.miou), 100.0),
        ]
    }

    pub fn to_json(&self) -> Value {
        let mut scaled = Map::new();
        let mut raw = Map::new();
        for (name, v, scale) in self.scalars() {
            scaled.insert(name.into(), json!(v.map(|v| v * scale)));
            raw.insert(name.into(), json!(v));
        }
        let mut per_frame = Map::new();
        if let Some(c) = &self.camera {
            per_frame.insert(
                "trans_cm".into(),
                json!(c.trans_m.iter().map(|v| v * 100.0).collect::<Vec<_>>()),
            );
            per_frame.insert("rot_deg".into(), json!(c.rot_deg));
        }
        if let Some(o) = &self.obj {
            per_frame.insert("obj_m".into(), json!(o.per_frame));
        }
        if let Some(h) = &self.hand {
            per_frame.insert("hand_iou".into(), json!(h.per_frame));
        }
        let mut root = Map::new();
        for (name, v) in scaled {
            root.insert(name, v);
        }
        root.insert("raw".into(), Value::Object(raw));
        root.insert("per_frame".into(), Value::Object(per_frame));
        if let Some(c) = &self.camera {
            root.insert("alignment".into(), alignment_json(c));
        }
        Value::Object(root)
    }

    /// Header plus one row of table-scaled values; absent metrics are empty.
    pub fn to_csv(&self) -> String {
        let scalars = self.scalars();
        let mut s = scalars
            .iter()
            .map(|(n, _, _)| *n)
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for (i, (_, v, scale)) in scalars.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            if let Some(v) = v {
                let _ = write!(s, "{}", v * scale);
            }
        }
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("report.json"), &self.to_json())?;
        write_atomic(&dir.join("report.csv"), self.to_csv().as_bytes())
    }
}

#[derive(Serialize)]
struct AlignmentJson {
    scale: f64,
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

fn alignment_json(c: &CameraError) -> Value {
    let s = &c.alignment;
    let r = s.rotation;
    serde_json::to_value(AlignmentJson {
        scale: s.scale,
        rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
        translation: [s.translation.x, s.translation.y, s.translation.z],
    })
    .expect("plain numbers serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::detection::Counts;

    #[test]
    fn scaled_and_raw() {
        let r = MetricReport {
            obj: Some(ObjScores {
                f1: 0.5,
                miou: 0.25,
                per_frame: vec![0.25],
                counts: Counts::default(),
            }),
            ..MetricReport::default()
        };
        let j = r.to_json();
        assert_eq!(j["obj_f1"], json!(50.0));
        assert_eq!(j["raw"]["obj_f1"], json!(0.5));
        assert_eq!(j["terr_cm"], Value::Null);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].starts_with(",,50,25,"));
    }
}
