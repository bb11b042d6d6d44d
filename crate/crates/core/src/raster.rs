//! Pose control drawing: exo 2D skeletons and ego joints with wrist axes.

use crate::error::{Error, Result};
use crate::geometry::{PinholeIntrinsics, Vec3};
use crate::image::{Rgb, RgbImage};
use crate::pose::{EgoPoseSequence, ExoPoseSequence, Topology};

pub const DEFAULT_AXIS_LENGTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawStyle {
    /// Keypoints below this confidence are invisible.
    pub confidence_threshold: f64,
    /// Radius of the filled circle at each visible joint, pixels.
    pub joint_radius: u32,
}

impl Default for DrawStyle {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.3,
            joint_radius: 2,
        }
    }
}

/// Integer Bresenham segment, endpoints inclusive.
pub fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y) = (x0, y0);
    let mut err = dx + dy;
    loop {
        img.put(x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

pub fn draw_disk(img: &mut RgbImage, (cx, cy): (i64, i64), radius: u32, c: Rgb) {
    let r = radius as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                img.put(cx + dx, cy + dy, c);
            }
        }
    }
}

fn in_bounds(img: &RgbImage, x: f64, y: f64) -> bool {
    x >= 0.0 && y >= 0.0 && x < img.width() as f64 && y < img.height() as f64
}

fn pixel(x: f64, y: f64) -> (i64, i64) {
    (x.floor() as i64, y.floor() as i64)
}

fn check_lengths(canvas: usize, controls: usize) -> Result<()> {
    if canvas != controls {
        return Err(Error::LengthMismatch {
            left: canvas,
            right: controls,
        });
    }
    Ok(())
}

/// Draws each person's limbs (both endpoints visible and inside the image)
/// and visible keypoints onto the matching canvas frame.
pub fn rasterize_exo_skeletons(
    canvas: &mut [RgbImage],
    exo: &ExoPoseSequence,
    topology: &Topology,
    style: &DrawStyle,
) -> Result<()> {
    check_lengths(canvas.len(), exo.len())?;
    for (img, persons) in canvas.iter_mut().zip(&exo.frames) {
        for person in persons {
            topology.check_joint_count(person.keypoints.len())?;
            let visible = |k: &[f64; 3]| k[2] >= style.confidence_threshold;
            for (e, &[a, b]) in topology.edges.iter().enumerate() {
                let (ka, kb) = (&person.keypoints[a], &person.keypoints[b]);
                if visible(ka)
                    && visible(kb)
                    && in_bounds(img, ka[0], ka[1])
                    && in_bounds(img, kb[0], kb[1])
                {
                    draw_line(
                        img,
                        pixel(ka[0], ka[1]),
                        pixel(kb[0], kb[1]),
                        topology.edge_color(e),
                    );
                }
            }
            for (j, k) in person.keypoints.iter().enumerate() {
                if visible(k) && in_bounds(img, k[0], k[1]) {
                    draw_disk(
                        img,
                        pixel(k[0], k[1]),
                        style.joint_radius,
                        topology.edge_color(j),
                    );
                }
            }
        }
    }
    Ok(())
}

const AXIS_COLORS: [Rgb; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Projects camera-frame joints and wrist axes; segments with an endpoint
/// outside the view are skipped rather than clipped.
pub fn rasterize_ego_overlay(
    canvas: &mut [RgbImage],
    ego: &EgoPoseSequence,
    intr: &PinholeIntrinsics,
    topology: &Topology,
    axis_length: f64,
    style: &DrawStyle,
) -> Result<()> {
    check_lengths(canvas.len(), ego.len())?;
    topology.check_joint_count(ego.num_joints())?;
    let proj = |p: &Vec3| intr.project(p).map(|q| pixel(q.u, q.v));
    for ((img, joints), wrists) in canvas.iter_mut().zip(&ego.joints).zip(&ego.wrists) {
        let px: Vec<Option<(i64, i64)>> = joints.iter().map(proj).collect();
        for (e, &[a, b]) in topology.edges.iter().enumerate() {
            if let (Some(pa), Some(pb)) = (px[a], px[b]) {
                draw_line(img, pa, pb, topology.edge_color(e));
            }
        }
        for (j, p) in px.iter().enumerate() {
            if let Some(p) = *p {
                draw_disk(img, p, style.joint_radius, topology.edge_color(j));
            }
        }
        for w in wrists {
            let Some(origin) = proj(&w.translation) else {
                continue;
            };
            for (axis, color) in AXIS_COLORS.iter().enumerate() {
                let tip = w.translation + axis_length * w.rotation.column(axis);
                if let Some(tip) = proj(&tip) {
                    draw_line(img, origin, tip, *color);
                }
            }
        }
    }
    Ok(())
}
