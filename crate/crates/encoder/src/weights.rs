//! Named parameter tensors, seeded initialization and the `E3W1` file format.

use std::collections::HashMap;
use std::path::Path;

use egomem_core::io::{read_maybe_gz, write_atomic, LeReader, LeWriter};
use egomem_core::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::EncoderConfig;
use crate::scalar::Real;

const WEIGHTS_MAGIC: &[u8; 4] = b"E3W1";

pub const JOINT_FEATURES: usize = 15;
pub const WRIST_FEATURES: usize = 27;
const EMBED_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    Uniform(usize),
    Normal,
    Ones,
    Zeros,
}

struct Spec {
    name: String,
    rows: usize,
    cols: usize,
    init: Init,
}

fn linear(out: &mut Vec<Spec>, prefix: &str, fan_in: usize, fan_out: usize, bias: bool) {
    out.push(Spec {
        name: format!("{prefix}.w"),
        rows: fan_in,
        cols: fan_out,
        init: Init::Uniform(fan_in),
    });
    if bias {
        out.push(Spec {
            name: format!("{prefix}.b"),
            rows: 1,
            cols: fan_out,
            init: Init::Uniform(fan_in),
        });
    }
}

fn layer_norm(out: &mut Vec<Spec>, prefix: &str, d: usize) {
    for (suffix, init) in [("g", Init::Ones), ("b", Init::Zeros)] {
        out.push(Spec {
            name: format!("{prefix}.{suffix}"),
            rows: 1,
            cols: d,
            init,
        });
    }
}

fn embedding(out: &mut Vec<Spec>, name: &str, rows: usize, cols: usize) {
    out.push(Spec {
        name: name.into(),
        rows,
        cols,
        init: Init::Normal,
    });
}

fn attention(out: &mut Vec<Spec>, prefix: &str, d: usize) {
    for proj in ["q", "k", "v", "o"] {
        linear(out, &format!("{prefix}.{proj}"), d, d, true);
    }
}

fn transformer(out: &mut Vec<Spec>, prefix: &str, d: usize) {
    layer_norm(out, &format!("{prefix}.ln1"), d);
    attention(out, &format!("{prefix}.attn"), d);
    layer_norm(out, &format!("{prefix}.ln2"), d);
    linear(out, &format!("{prefix}.mlp1"), d, 4 * d, true);
    linear(out, &format!("{prefix}.mlp2"), 4 * d, d, true);
}

/// Parameter names, shapes and initializers in a fixed order.
fn layout(cfg: &EncoderConfig) -> Vec<Spec> {
    let d = cfg.d_model;
    let mut s = Vec::new();
    linear(&mut s, "joint_embed", JOINT_FEATURES, d, true);
    embedding(&mut s, "joint_id", cfg.joints, d);
    for l in 0..cfg.n_spatial {
        transformer(&mut s, &format!("spatial.{l}"), d);
    }
    embedding(&mut s, "body_pool.query", 1, d);
    attention(&mut s, "body_pool.attn", d);
    layer_norm(&mut s, "body_pool.ln", d);
    linear(&mut s, "wrist_embed", WRIST_FEATURES, d, true);
    embedding(&mut s, "wrist_id", 2, d);
    embedding(&mut s, "wrist_pool.query", 1, d);
    attention(&mut s, "wrist_pool.attn", d);
    layer_norm(&mut s, "wrist_pool.ln", d);
    linear(&mut s, "gate", 2 * d, d, true);
    for l in 0..cfg.n_temporal {
        transformer(&mut s, &format!("temporal.{l}"), d);
    }
    embedding(&mut s, "global.queries", cfg.k, d);
    attention(&mut s, "global.attn", d);
    linear(&mut s, "out", d, cfg.d_dit, false);
    embedding(&mut s, "e_pose", 1, cfg.d_dit);
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T: Real> {
    names: Vec<String>,
    tensors: Vec<DMatrix<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> EncoderWeights<T> {
    /// Deterministic initialization from `cfg.seed`; values are drawn in f64
    /// row-major, tensor by tensor, then cast.
    pub fn init(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, EMBED_STD).expect("positive std");
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for spec in layout(cfg) {
            let values: Vec<f64> = (0..spec.rows * spec.cols)
                .map(|_| match spec.init {
                    Init::Uniform(fan_in) => {
                        let bound = 1.0 / (fan_in as f64).sqrt();
                        rng.random_range(-bound..bound)
                    }
                    Init::Normal => normal.sample(&mut rng),
                    Init::Ones => 1.0,
                    Init::Zeros => 0.0,
                })
                .collect();
            names.push(spec.name);
            tensors.push(DMatrix::from_row_iterator(
                spec.rows,
                spec.cols,
                values.into_iter().map(T::of),
            ));
        }
        Ok(Self::from_parts(names, tensors))
    }

    fn from_parts(names: Vec<String>, tensors: Vec<DMatrix<T>>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self {
            names,
            tensors,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&DMatrix<T>> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DMatrix<T>> {
        self.index_of(name).map(|i| &mut self.tensors[i])
    }

    pub fn tensor(&self, i: usize) -> &DMatrix<T> {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut DMatrix<T> {
        &mut self.tensors[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DMatrix<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn cast<U: Real>(&self) -> EncoderWeights<U> {
        EncoderWeights::from_parts(
            self.names.clone(),
            self.tensors
                .iter()
                .map(|t| t.map(|v| U::of(v.to_f64())))
                .collect(),
        )
    }

    /// Checks names and shapes against the layout implied by `cfg`.
    pub fn check(&self, cfg: &EncoderConfig) -> Result<()> {
        let specs = layout(cfg);
        if specs.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, config expects {}",
                self.len(),
                specs.len()
            )));
        }
        for (spec, (name, t)) in specs.iter().zip(self.iter()) {
            if spec.name != name || (spec.rows, spec.cols) != t.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {name} {:?} does not match expected {} ({}x{})",
                    t.shape(),
                    spec.name,
                    spec.rows,
                    spec.cols
                )));
            }
            if !t.iter().all(|v| v.is_finite_val()) {
                return Err(Error::InvalidInput(format!(
                    "parameter {name} has non-finite values"
                )));
            }
        }
        Ok(())
    }

    /// Config block, then `(name, rank, dims, f32 row-major payload)` records.
    pub fn to_bytes(&self, cfg: &EncoderConfig) -> Vec<u8> {
        let mut w = LeWriter::new(WEIGHTS_MAGIC);
        for v in [
            cfg.d_model,
            cfg.d_dit,
            cfg.k,
            cfg.n_spatial,
            cfg.n_temporal,
            cfg.heads,
            cfg.joints,
        ] {
            w.u32(v as u32);
        }
        w.f64(cfg.dropout);
        w.u64(cfg.seed);
        w.u32(self.len() as u32);
        for (name, t) in self.iter() {
            w.u32(name.len() as u32);
            w.bytes(name.as_bytes());
            w.u32(2);
            w.u32(t.nrows() as u32);
            w.u32(t.ncols() as u32);
            for r in 0..t.nrows() {
                for c in 0..t.ncols() {
                    w.f32(t[(r, c)].to_f32());
                }
            }
        }
        w.buf
    }

    pub fn write(&self, cfg: &EncoderConfig, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes(cfg))
    }
}

impl EncoderWeights<f32> {
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(EncoderConfig, Self)> {
        let mut r = LeReader::new(bytes, WEIGHTS_MAGIC, path, "encoder weights")?;
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [d_model, d_dit, k, n_spatial, n_temporal, heads, joints] = dims;
        let cfg = EncoderConfig {
            d_model,
            d_dit,
            k,
            n_spatial,
            n_temporal,
            heads,
            joints,
            dropout: r.f64()?,
            seed: r.u64()?,
        };
        cfg.validate().map_err(|e| r.err(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut names = Vec::with_capacity(count);
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| r.err("parameter name is not utf-8"))?
                .to_string();
            let rank = r.u32()?;
            if rank != 2 {
                return Err(r.err(format!("parameter {name} has rank {rank}, expected 2")));
            }
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            let values = r.f32_vec(rows * cols)?;
            names.push(name);
            tensors.push(DMatrix::from_row_slice(rows, cols, &values));
        }
        r.finish()?;
        let w = Self::from_parts(names, tensors);
        w.check(&cfg)
            .map_err(|e| Error::format(path, "encoder weights", e.to_string()))?;
        Ok((cfg, w))
    }

    pub fn read(path: &Path) -> Result<(EncoderConfig, Self)> {
        Self::from_bytes(&read_maybe_gz(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = EncoderConfig::tiny();
        let a = EncoderWeights::<f32>::init(&cfg).unwrap();
        let b = EncoderWeights::<f32>::init(&cfg).unwrap();
        assert_eq!(a, b);
        let c = EncoderWeights::<f32>::init(&EncoderConfig {
            seed: 1,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(a, c);
        a.check(&cfg).unwrap();
        let w = a.get("joint_embed.w").unwrap();
        let bound = 1.0 / (15f32).sqrt();
        assert!(w.iter().all(|v| v.abs() <= bound));
        assert!(a.get("spatial.1.ln2.g").unwrap().iter().all(|&v| v == 1.0));
        assert!(a.get("out.b").is_none());
        assert_eq!(a.get("e_pose").unwrap().shape(), (1, 48));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let cfg = EncoderConfig {
            seed: 9,
            dropout: 0.25,
            ..EncoderConfig::tiny()
        };
        let w = EncoderWeights::<f32>::init(&cfg).unwrap();
        let bytes = w.to_bytes(&cfg);
        let (cfg2, w2) = EncoderWeights::from_bytes(&bytes, Path::new("enc.e3w")).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(w2, w);
        assert_eq!(w2.to_bytes(&cfg2), bytes);
    }

    #[test]
    fn rejects_mismatched_layout() {
        let cfg = EncoderConfig::tiny();
        let w = EncoderWeights::<f32>::init(&cfg).unwrap();
        let other = EncoderConfig {
            n_temporal: 1,
            ..cfg
        };
        assert!(w.check(&other).is_err());
        let mut bytes = w.to_bytes(&other);
        assert!(EncoderWeights::from_bytes(&bytes, Path::new("x")).is_err());
        bytes.truncate(10);
        assert!(EncoderWeights::from_bytes(&bytes, Path::new("x")).is_err());
    }
}
