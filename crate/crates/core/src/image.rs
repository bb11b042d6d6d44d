//! RGB frames in `[0,1]` and binary PPM (P6) I/O.
//!
//! Pixel `(x, y)` has its center at integer coordinates for sampling; a
//! continuous point `(u, v)` falls in pixel `(floor(u), floor(v))`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub type Rgb = [f32; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

pub type RgbVideo = Vec<RgbImage>;

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Sets a pixel given signed coordinates; out-of-bounds writes are ignored.
    #[inline]
    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize, c);
        }
    }

    /// Bilinear sample with edge clamping, pixel centers at integer coordinates.
    pub fn bilinear(&self, u: f64, v: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        bilinear_taps(u, v, self.width, self.height, |x, y, w| {
            let c = self.get(x, y);
            for k in 0..3 {
                out[k] += w * c[k] as f64;
            }
        });
        out
    }

    /// 8-bit PPM bytes; values are clamped to `[0,1]` and rounded.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| quantize(v)));
        out
    }

    pub fn from_ppm(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(path, "PPM", msg.to_string());
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            tokens.push(
                std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?,
            );
        }
        if tokens[0] != "P6" {
            return Err(bad("only binary P6 is supported"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("invalid header number"));
        let (width, height, maxval) = (parse(tokens[1])?, parse(tokens[2])?, parse(tokens[3])?);
        if maxval != 255 {
            return Err(bad("maxval must be 255"));
        }
        pos += 1; // single whitespace after maxval
        let n = width * height * 3;
        if bytes.len() < pos + n {
            return Err(bad("truncated pixel data"));
        }
        let data = bytes[pos..pos + n]
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ppm(&bytes, path)
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_ppm())
    }
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Calls `tap(x, y, weight)` for the (up to four) bilinear taps at `(u, v)`,
/// clamping coordinates to the image.
#[inline]
pub(crate) fn bilinear_taps(
    u: f64,
    v: f64,
    width: usize,
    height: usize,
    mut tap: impl FnMut(usize, usize, f64),
) {
    let clamp = |c: f64, n: usize| c.clamp(0.0, (n - 1) as f64);
    let u = clamp(u, width);
    let v = clamp(v, height);
    let x0 = u.floor() as usize;
    let y0 = v.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let ax = u - x0 as f64;
    let ay = v - y0 as f64;
    tap(x0, y0, (1.0 - ax) * (1.0 - ay));
    if ax > 0.0 {
        tap(x1, y0, ax * (1.0 - ay));
    }
    if ay > 0.0 {
        tap(x0, y1, (1.0 - ax) * ay);
    }
    if ax > 0.0 && ay > 0.0 {
        tap(x1, y1, ax * ay);
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.ppm")
}

/// Writes `frame_00000.ppm`, `frame_00001.ppm`, ... into `dir`.
pub fn write_video(dir: &Path, frames: &[RgbImage]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        f.write_ppm(&dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

/// Reads `frame_%05d.ppm` for each requested frame index.
pub fn read_frames(dir: &Path, indices: &[u32]) -> Result<Vec<RgbImage>> {
    indices
        .iter()
        .map(|&i| RgbImage::read_ppm(&dir.join(frame_file_name(i as usize))))
        .collect()
}
