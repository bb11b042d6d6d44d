//! Dense feature videos (`featmap.bin`) and occupancy masks (`mask.bin`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::bilinear_taps;
use crate::io::{read_maybe_gz, write_atomic, LeReader, LeWriter};

const FEATMAP_MAGIC: &[u8; 4] = b"E3CF";
const MASK_MAGIC: &[u8; 4] = b"E3CM";

/// `n x H x W x D` f32 tensor, frame-major, row-major, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVideo {
    n_frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureVideo {
    pub fn zeros(n_frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            n_frames,
            height,
            width,
            channels,
            data: vec![0.0; n_frames * height * width * channels],
        }
    }

    pub fn from_raw(
        n_frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let v = Self {
            n_frames,
            height,
            width,
            channels,
            data,
        };
        v.validate()?;
        Ok(v)
    }

    fn validate(&self) -> Result<()> {
        if self.n_frames == 0 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "feature video dims must be positive: {}x{}x{}x{}",
                self.n_frames, self.height, self.width, self.channels
            )));
        }
        if self.data.len() != self.n_frames * self.height * self.width * self.channels {
            return Err(Error::ShapeMismatch(
                "feature payload length does not match dims".into(),
            ));
        }
        if !self.data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "feature video contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn offset(&self, frame: usize, y: usize, x: usize) -> usize {
        ((frame * self.height + y) * self.width + x) * self.channels
    }

    pub fn cell(&self, frame: usize, y: usize, x: usize) -> &[f32] {
        let o = self.offset(frame, y, x);
        &self.data[o..o + self.channels]
    }

    pub fn cell_mut(&mut self, frame: usize, y: usize, x: usize) -> &mut [f32] {
        let o = self.offset(frame, y, x);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    /// Bilinear sample at continuous feature coordinates with edge clamping,
    /// accumulated in f64.
    pub fn bilinear(&self, frame: usize, fx: f64, fy: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        bilinear_taps(fx, fy, self.width, self.height, |x, y, w| {
            for (o, &v) in out.iter_mut().zip(self.cell(frame, y, x)) {
                *o += w * v as f64;
            }
        });
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = LeWriter::new(FEATMAP_MAGIC);
        for d in [self.n_frames, self.height, self.width, self.channels] {
            w.u32(d as u32);
        }
        for &v in &self.data {
            w.f32(v);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = LeReader::new(bytes, FEATMAP_MAGIC, path, "featmap")?;
        let (n, h, w, d) = (
            r.u32()? as usize,
            r.u32()? as usize,
            r.u32()? as usize,
            r.u32()? as usize,
        );
        let data = r.f32_vec(n * h * w * d)?;
        r.finish()?;
        Self::from_raw(n, h, w, d, data).map_err(|e| Error::format(path, "featmap", e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_maybe_gz(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

/// Per-cell occupancy emitted alongside a rendered feature video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMask {
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl OccupancyMask {
    pub fn zeros(n_frames: usize, height: usize, width: usize) -> Self {
        Self {
            n_frames,
            height,
            width,
            data: vec![0; n_frames * height * width],
        }
    }

    pub fn get(&self, frame: usize, y: usize, x: usize) -> u8 {
        self.data[(frame * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, frame: usize, y: usize, x: usize, v: u8) {
        self.data[(frame * self.height + y) * self.width + x] = v;
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = LeWriter::new(MASK_MAGIC);
        for d in [self.n_frames, self.height, self.width, 1] {
            w.u32(d as u32);
        }
        w.bytes(&self.data);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = LeReader::new(bytes, MASK_MAGIC, path, "mask")?;
        let (n, h, w, d) = (
            r.u32()? as usize,
            r.u32()? as usize,
            r.u32()? as usize,
            r.u32()?,
        );
        if d != 1 {
            return Err(r.err("mask channel count must be 1"));
        }
        let data = r.take(n * h * w)?.to_vec();
        r.finish()?;
        Ok(Self {
            n_frames: n,
            height: h,
            width: w,
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}
