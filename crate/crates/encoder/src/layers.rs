//! Network building blocks on the tape, plus plain-matrix entry points.

use egomem_core::{Error, Result};

use crate::scalar::Real;
use crate::tape::{AttentionSpec, Mat, Tape, Var};

/// Input and output projections of one multi-head attention block.
#[derive(Debug, Clone, Copy)]
pub struct AttnVars {
    pub q: (Var, Var),
    pub k: (Var, Var),
    pub v: (Var, Var),
    pub o: (Var, Var),
}

#[derive(Debug, Clone, Copy)]
pub struct TransformerVars {
    pub ln1: (Var, Var),
    pub attn: AttnVars,
    pub ln2: (Var, Var),
    pub mlp1: (Var, Var),
    pub mlp2: (Var, Var),
}

pub fn linear<T: Real>(t: &mut Tape<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let y = t.matmul(x, w)?;
    match b {
        Some(b) => t.add_row(y, b),
        None => Ok(y),
    }
}

/// Projected multi-head attention of `q` over `k`/`v`.
pub fn mha<T: Real>(
    t: &mut Tape<T>,
    q: Var,
    k: Var,
    v: Var,
    a: &AttnVars,
    spec: AttentionSpec,
) -> Result<Var> {
    let qp = linear(t, q, a.q.0, Some(a.q.1))?;
    let kp = linear(t, k, a.k.0, Some(a.k.1))?;
    let vp = linear(t, v, a.v.0, Some(a.v.1))?;
    let o = t.attention(qp, kp, vp, spec)?;
    linear(t, o, a.o.0, Some(a.o.1))
}

/// Pre-norm encoder layer; self-attention stays within blocks of `group` rows.
pub fn transformer_layer<T: Real>(
    t: &mut Tape<T>,
    x: Var,
    p: &TransformerVars,
    heads: usize,
    group: usize,
) -> Result<Var> {
    let h = t.layer_norm(x, p.ln1.0, p.ln1.1)?;
    let spec = AttentionSpec {
        heads,
        q_group: group,
        k_group: group,
    };
    let a = mha(t, h, h, h, &p.attn, spec)?;
    let x = t.add(x, a)?;
    let h = t.layer_norm(x, p.ln2.0, p.ln2.1)?;
    let h = linear(t, h, p.mlp1.0, Some(p.mlp1.1))?;
    let h = t.gelu(h);
    let h = linear(t, h, p.mlp2.0, Some(p.mlp2.1))?;
    t.add(x, h)
}

/// `f_body + sigmoid([f_body, f_wrist] W_g + b_g) * f_wrist`.
pub fn gate_fuse<T: Real>(t: &mut Tape<T>, body: Var, wrist: Var, w: Var, b: Var) -> Result<Var> {
    let cat = t.concat_cols(body, wrist)?;
    let pre = linear(t, cat, w, Some(b))?;
    let g = t.sigmoid(pre);
    let gw = t.mul(g, wrist)?;
    t.add(body, gw)
}

/// Weights of one attention block as plain matrices (`x W + b` convention).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<T: Real> {
    pub wq: Mat<T>,
    pub bq: Mat<T>,
    pub wk: Mat<T>,
    pub bk: Mat<T>,
    pub wv: Mat<T>,
    pub bv: Mat<T>,
    pub wo: Mat<T>,
    pub bo: Mat<T>,
}

impl<T: Real> AttentionWeights<T> {
    fn load(&self, t: &mut Tape<T>) -> AttnVars {
        let mut leaf = |m: &Mat<T>| t.leaf(m.clone());
        AttnVars {
            q: (leaf(&self.wq), leaf(&self.bq)),
            k: (leaf(&self.wk), leaf(&self.bk)),
            v: (leaf(&self.wv), leaf(&self.bv)),
            o: (leaf(&self.wo), leaf(&self.bo)),
        }
    }
}

/// Standard multi-head attention: `a x D` queries over `b x D` keys/values.
pub fn multi_head_attention<T: Real>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    w: &AttentionWeights<T>,
    heads: usize,
) -> Result<Mat<T>> {
    if k.nrows() != v.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} keys vs {} values",
            k.nrows(),
            v.nrows()
        )));
    }
    let mut t = Tape::new();
    let a = w.load(&mut t);
    let (qv, kv, vv) = (t.leaf(q.clone()), t.leaf(k.clone()), t.leaf(v.clone()));
    let spec = AttentionSpec {
        heads,
        q_group: q.nrows(),
        k_group: k.nrows(),
    };
    let out = mha(&mut t, qv, kv, vv, &a, spec)?;
    Ok(t.value(out).clone())
}

/// `LN(MHA(query, tokens, tokens))` for a single `1 x D` query.
pub fn attention_pool<T: Real>(
    tokens: &Mat<T>,
    query: &Mat<T>,
    w: &AttentionWeights<T>,
    ln: (&Mat<T>, &Mat<T>),
    heads: usize,
) -> Result<Mat<T>> {
    if tokens.nrows() == 0 || query.nrows() != 1 {
        return Err(Error::ShapeMismatch(
            "pooling needs one query and at least one token".into(),
        ));
    }
    let mut t = Tape::new();
    let a = w.load(&mut t);
    let (q, x) = (t.leaf(query.clone()), t.leaf(tokens.clone()));
    let (g, b) = (t.leaf(ln.0.clone()), t.leaf(ln.1.clone()));
    let spec = AttentionSpec {
        heads,
        q_group: 1,
        k_group: tokens.nrows(),
    };
    let pooled = mha(&mut t, q, x, x, &a, spec)?;
    let out = t.layer_norm(pooled, g, b)?;
    Ok(t.value(out).clone())
}

pub fn gated_fuse<T: Real>(
    body: &Mat<T>,
    wrist: &Mat<T>,
    w_g: &Mat<T>,
    b_g: &Mat<T>,
) -> Result<Mat<T>> {
    let d = body.ncols();
    if body.shape() != wrist.shape() || w_g.shape() != (2 * d, d) || b_g.shape() != (1, d) {
        return Err(Error::ShapeMismatch(format!(
            "gate shapes body {:?}, wrist {:?}, W_g {:?}, b_g {:?}",
            body.shape(),
            wrist.shape(),
            w_g.shape(),
            b_g.shape()
        )));
    }
    let mut t = Tape::new();
    let (bv, wv) = (t.leaf(body.clone()), t.leaf(wrist.clone()));
    let (wg, bg) = (t.leaf(w_g.clone()), t.leaf(b_g.clone()));
    let out = gate_fuse(&mut t, bv, wv, wg, bg)?;
    Ok(t.value(out).clone())
}
