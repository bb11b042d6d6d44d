//! The encoder forward pass on the autodiff tape.

use egomem_core::bundle::{PoseTokenizer, PoseTokens};
use egomem_core::pose::EgoPoseSequence;
use egomem_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::EncoderConfig;
use crate::features::{build_joint_features, build_wrist_features, sinusoidal_embedding};
use crate::layers::{gate_fuse, linear, mha, transformer_layer, AttnVars, TransformerVars};
use crate::scalar::Real;
use crate::tape::{AttentionSpec, Mat, Tape, Var};
use crate::weights::{EncoderWeights, JOINT_FEATURES, WRIST_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout is the identity.
    Eval,
    /// Dropout masks drawn from a generator seeded with `seed`.
    Train { seed: u64 },
}

/// A recorded forward pass: `params[i]` is the leaf for weight tensor `i`.
pub struct Trace<T: Real> {
    pub tape: Tape<T>,
    pub params: Vec<Var>,
    pub output: Var,
}

/// Parameter lookup by name during graph construction.
pub struct Params<'a, T: Real> {
    weights: &'a EncoderWeights<T>,
    vars: &'a [Var],
}

impl<'a, T: Real> Params<'a, T> {
    pub fn new(weights: &'a EncoderWeights<T>, vars: &'a [Var]) -> Result<Self> {
        if vars.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter leaves for {} tensors",
                vars.len(),
                weights.len()
            )));
        }
        Ok(Self { weights, vars })
    }

    fn get(&self, name: &str) -> Result<Var> {
        self.weights
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::InvalidInput(format!("missing parameter {name}")))
    }

    fn pair(&self, prefix: &str, a: &str, b: &str) -> Result<(Var, Var)> {
        Ok((
            self.get(&format!("{prefix}.{a}"))?,
            self.get(&format!("{prefix}.{b}"))?,
        ))
    }

    fn linear(&self, prefix: &str) -> Result<(Var, Var)> {
        self.pair(prefix, "w", "b")
    }

    fn norm(&self, prefix: &str) -> Result<(Var, Var)> {
        self.pair(prefix, "g", "b")
    }

    fn attn(&self, prefix: &str) -> Result<AttnVars> {
        Ok(AttnVars {
            q: self.linear(&format!("{prefix}.q"))?,
            k: self.linear(&format!("{prefix}.k"))?,
            v: self.linear(&format!("{prefix}.v"))?,
            o: self.linear(&format!("{prefix}.o"))?,
        })
    }

    fn transformer(&self, prefix: &str) -> Result<TransformerVars> {
        Ok(TransformerVars {
            ln1: self.norm(&format!("{prefix}.ln1"))?,
            attn: self.attn(&format!("{prefix}.attn"))?,
            ln2: self.norm(&format!("{prefix}.ln2"))?,
            mlp1: self.linear(&format!("{prefix}.mlp1"))?,
            mlp2: self.linear(&format!("{prefix}.mlp2"))?,
        })
    }
}

fn checked<T: Real>(t: &Tape<T>, v: Var, layer: &str) -> Result<Var> {
    if t.value(v).iter().all(|x| x.is_finite_val()) {
        Ok(v)
    } else {
        Err(Error::NonFiniteActivation {
            layer: layer.into(),
        })
    }
}

fn dropout_mask<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> Mat<T> {
    let keep = T::of(1.0 / (1.0 - p));
    let draws: Vec<T> = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    Mat::from_row_slice(rows, cols, &draws)
}

fn leaf_rows<T: Real, const C: usize>(
    t: &mut Tape<T>,
    rows: impl Iterator<Item = [f64; C]>,
) -> Var {
    let data: Vec<T> = rows.flat_map(|r| r.into_iter().map(T::of)).collect();
    let n = data.len() / C;
    t.leaf(Mat::from_row_slice(n, C, &data))
}

/// Builds the full encoder graph on `t` using parameter leaves `p`.
pub fn build_graph<T: Real>(
    t: &mut Tape<T>,
    p: &Params<T>,
    cfg: &EncoderConfig,
    ego: &EgoPoseSequence,
    mode: Mode,
) -> Result<Var> {
    let n = ego.len();
    let j = ego.num_joints();
    if n == 0 {
        return Err(Error::InvalidInput("empty ego pose sequence".into()));
    }
    if j != cfg.joints {
        return Err(Error::ShapeMismatch(format!(
            "{j} joints, encoder expects {}",
            cfg.joints
        )));
    }
    let mut rng = match mode {
        Mode::Eval => None,
        Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let d = cfg.d_model;
    let spec = |q_group, k_group| AttentionSpec {
        heads: cfg.heads,
        q_group,
        k_group,
    };

    // Joint tokens, frame-major: row t*J + j.
    let joints = build_joint_features(ego);
    let u = leaf_rows::<T, JOINT_FEATURES>(t, joints.into_iter().flatten());
    let (w, b) = p.linear("joint_embed")?;
    let x = linear(t, u, w, Some(b))?;
    let mut x = t.add_tiled(x, p.get("joint_id")?)?;
    if let Some(rng) = rng.as_mut() {
        let mask = dropout_mask(rng, n * j, d, cfg.dropout);
        x = t.dropout(x, mask)?;
    }
    let mut x = checked(t, x, "joint_embed")?;
    for l in 0..cfg.n_spatial {
        let name = format!("spatial.{l}");
        x = transformer_layer(t, x, &p.transformer(&name)?, cfg.heads, j)?;
        x = checked(t, x, &name)?;
    }
    let q = t.tile_rows(p.get("body_pool.query")?, n);
    let pooled = mha(t, q, x, x, &p.attn("body_pool.attn")?, spec(1, j))?;
    let (g, b) = p.norm("body_pool.ln")?;
    let body = t.layer_norm(pooled, g, b)?;
    let body = checked(t, body, "body_pool")?;

    // Wrist tokens: row 2t + side.
    let wrists = build_wrist_features(ego);
    let uw = leaf_rows::<T, WRIST_FEATURES>(t, wrists.into_iter().flatten());
    let (w, b) = p.linear("wrist_embed")?;
    let xw = linear(t, uw, w, Some(b))?;
    let xw = t.add_tiled(xw, p.get("wrist_id")?)?;
    let xw = checked(t, xw, "wrist_embed")?;
    let q = t.tile_rows(p.get("wrist_pool.query")?, n);
    let pooled = mha(t, q, xw, xw, &p.attn("wrist_pool.attn")?, spec(1, 2))?;
    let (g, b) = p.norm("wrist_pool.ln")?;
    let wrist = t.layer_norm(pooled, g, b)?;
    let wrist = checked(t, wrist, "wrist_pool")?;

    let (w, b) = p.linear("gate")?;
    let fused = gate_fuse(t, body, wrist, w, b)?;
    let fused = checked(t, fused, "gate")?;

    let pe: Vec<T> = sinusoidal_embedding(n, d)
        .into_iter()
        .flatten()
        .map(T::of)
        .collect();
    let pe = t.leaf(Mat::from_row_slice(n, d, &pe));
    let mut f = t.add(fused, pe)?;
    for l in 0..cfg.n_temporal {
        let name = format!("temporal.{l}");
        f = transformer_layer(t, f, &p.transformer(&name)?, cfg.heads, n)?;
        f = checked(t, f, &name)?;
    }

    let queries = p.get("global.queries")?;
    let global = mha(t, queries, f, f, &p.attn("global.attn")?, spec(cfg.k, n))?;
    let global = checked(t, global, "global")?;

    let h = t.concat_rows(f, global)?;
    let mut out = t.matmul(h, p.get("out.w")?)?;
    if let Some(rng) = rng.as_mut() {
        let mask = dropout_mask(rng, n + cfg.k, cfg.d_dit, cfg.dropout);
        out = t.dropout(out, mask)?;
    }
    let out = t.add_row(out, p.get("e_pose")?)?;
    checked(t, out, "out")
}

/// Persistent ego pose token encoder.
#[derive(Debug, Clone)]
pub struct EgoPoseEncoder<T: Real> {
    cfg: EncoderConfig,
    weights: EncoderWeights<T>,
}

impl<T: Real> EgoPoseEncoder<T> {
    pub fn new(cfg: EncoderConfig, weights: EncoderWeights<T>) -> Result<Self> {
        cfg.validate()?;
        weights.check(&cfg)?;
        Ok(Self { cfg, weights })
    }

    /// Seeded random weights for `cfg`.
    pub fn init(cfg: EncoderConfig) -> Result<Self> {
        let weights = EncoderWeights::init(&cfg)?;
        Ok(Self { cfg, weights })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &EncoderWeights<T> {
        &self.weights
    }

    /// Mutable access for tests and ablations; shapes must be preserved.
    pub fn weights_mut(&mut self) -> &mut EncoderWeights<T> {
        &mut self.weights
    }

    pub fn trace(&self, ego: &EgoPoseSequence, mode: Mode) -> Result<Trace<T>> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .weights
            .iter()
            .map(|(_, m)| tape.leaf(m.clone()))
            .collect();
        let p = Params::new(&self.weights, &params)?;
        let output = build_graph(&mut tape, &p, &self.cfg, ego, mode)?;
        Ok(Trace {
            tape,
            params,
            output,
        })
    }

    /// `(n + K) x D_DiT` pose tokens.
    pub fn forward(&self, ego: &EgoPoseSequence, mode: Mode) -> Result<Mat<T>> {
        let trace = self.trace(ego, mode)?;
        Ok(trace.tape.value(trace.output).clone())
    }
}

impl<T: Real> EgoPoseEncoder<T> {
    /// Eval-mode tokens converted to the f32 wire type.
    pub fn encode(&self, ego: &EgoPoseSequence) -> Result<PoseTokens> {
        let m = self.forward(ego, Mode::Eval)?;
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].to_f32())
            .collect();
        PoseTokens::new(m.nrows(), m.ncols(), data)
    }
}

impl<T: Real> PoseTokenizer for EgoPoseEncoder<T> {
    fn tokenize(&self, ego: &EgoPoseSequence) -> Result<PoseTokens> {
        self.encode(ego)
    }
}
