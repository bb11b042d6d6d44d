//! Reverse-mode automatic differentiation over dense row-oriented matrices.
//!
//! Every operation appends a node holding its forward value; `backward`
//! walks the nodes in reverse, so evaluation order is fixed by construction.

use egomem_core::{Error, Result};
use nalgebra::DMatrix;

use crate::scalar::Real;

pub type Mat<T> = DMatrix<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    /// Position on the tape; also the index into `Tape::backward` output.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Grouped multi-head attention layout.
///
/// Query rows come in blocks of `q_group`, key/value rows in blocks of
/// `k_group`; block `g` of the queries attends only to block `g` of the keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionSpec {
    pub heads: usize,
    pub q_group: usize,
    pub k_group: usize,
}

pub const LN_EPS: f64 = 1e-5;

enum Op<T: Real> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a + 1 * b` for a `1 x c` row `b`.
    AddRow(Var, Var),
    /// `a + [b; b; ...]`.
    AddTiled(Var, Var),
    TileRows(Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat<T>,
        inv_std: Vec<T>,
    },
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        spec: AttentionSpec,
        probs: Vec<Mat<T>>,
    },
    /// Elementwise multiply by a fixed (already rescaled) keep mask.
    Dropout(Var, Mat<T>),
}

struct Node<T: Real> {
    value: Mat<T>,
    op: Op<T>,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<T>(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<T> {
    Err(Error::ShapeMismatch(format!(
        "{what}: {}x{} vs {}x{}",
        a.0, a.1, b.0, b.1
    )))
}

const GELU_C: f64 = 0.044715;

fn gelu<T: Real>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + T::of(GELU_C) * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    let th = (c * (x + T::of(GELU_C) * x * x * x)).tanh();
    half * (T::one() + th)
        + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0 * GELU_C) * x * x)
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn sum_blocks<T: Real>(g: &Mat<T>, rows: usize) -> Mat<T> {
    let mut out = Mat::zeros(rows, g.ncols());
    for b in 0..g.nrows() / rows {
        out += g.rows(b * rows, rows);
    }
    out
}

fn tile<T: Real>(a: &Mat<T>, times: usize) -> Mat<T> {
    let r = a.nrows();
    Mat::from_fn(r * times, a.ncols(), |i, j| a[(i % r, j)])
}

fn softmax_rows<T: Real>(s: &mut Mat<T>) {
    for mut row in s.row_iter_mut() {
        let m = row
            .iter()
            .copied()
            .fold(T::min_value().unwrap(), |a, b| a.max(b));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a).1 != self.dims(b).0 {
            return shape_err("matmul", self.dims(a), self.dims(b));
        }
        let v = self.value(a) * self.value(b);
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return shape_err("add", self.dims(a), self.dims(b));
        }
        let v = self.value(a) + self.value(b);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (da, db) = (self.dims(a), self.dims(row));
        if db.0 != 1 || db.1 != da.1 {
            return shape_err("add_row", da, db);
        }
        let mut v = self.value(a).clone();
        let r = self.value(row);
        for mut vr in v.row_iter_mut() {
            vr += r;
        }
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    pub fn add_tiled(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.dims(a), self.dims(b));
        if db.0 == 0 || da.0 % db.0 != 0 || da.1 != db.1 {
            return shape_err("add_tiled", da, db);
        }
        let v = self.value(a) + tile(self.value(b), da.0 / db.0);
        Ok(self.push(v, Op::AddTiled(a, b)))
    }

    pub fn tile_rows(&mut self, a: Var, times: usize) -> Var {
        let v = tile(self.value(a), times);
        self.push(v, Op::TileRows(a))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            return shape_err("mul", self.dims(a), self.dims(b));
        }
        let v = self.value(a).component_mul(self.value(b));
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Per-row normalization with learned `1 x c` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (dx, dg, db) = (self.dims(x), self.dims(gamma), self.dims(beta));
        if dg != (1, dx.1) || db != (1, dx.1) {
            return shape_err("layer_norm", dx, dg);
        }
        let xv = self.value(x);
        let c = T::of(dx.1 as f64);
        let mut xhat = Mat::zeros(dx.0, dx.1);
        let mut inv_std = Vec::with_capacity(dx.0);
        for i in 0..dx.0 {
            let row = xv.row(i);
            let mean = row.iter().fold(T::zero(), |s, &v| s + v) / c;
            let var = row
                .iter()
                .fold(T::zero(), |s, &v| s + (v - mean) * (v - mean))
                / c;
            let inv = T::one() / (var + T::of(LN_EPS)).sqrt();
            for j in 0..dx.1 {
                xhat[(i, j)] = (row[j] - mean) * inv;
            }
            inv_std.push(inv);
        }
        let (g, b) = (self.value(gamma), self.value(beta));
        let v = Mat::from_fn(dx.0, dx.1, |i, j| xhat[(i, j)] * g[(0, j)] + b[(0, j)]);
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da.0 != db.0 {
            return shape_err("concat_cols", da, db);
        }
        let mut v = Mat::zeros(da.0, da.1 + db.1);
        v.columns_mut(0, da.1).copy_from(self.value(a));
        v.columns_mut(da.1, db.1).copy_from(self.value(b));
        Ok(self.push(v, Op::ConcatCols(a, b)))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da.1 != db.1 {
            return shape_err("concat_rows", da, db);
        }
        let mut v = Mat::zeros(da.0 + db.0, da.1);
        v.rows_mut(0, da.0).copy_from(self.value(a));
        v.rows_mut(da.0, db.0).copy_from(self.value(b));
        Ok(self.push(v, Op::ConcatRows(a, b)))
    }

    /// Scaled dot-product attention per head and group over already
    /// projected `q`, `k`, `v`; returns concatenated head outputs.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Result<Var> {
        let (dq, dk, dv) = (self.dims(q), self.dims(k), self.dims(v));
        let d = dq.1;
        if spec.heads == 0 || d % spec.heads != 0 {
            return Err(Error::ShapeMismatch(format!(
                "width {d} not divisible by {} heads",
                spec.heads
            )));
        }
        if dk != dv || dk.1 != d {
            return shape_err("attention keys/values", dk, dv);
        }
        if spec.q_group == 0
            || spec.k_group == 0
            || dq.0 % spec.q_group != 0
            || dk.0 % spec.k_group != 0
        {
            return shape_err("attention grouping", dq, dk);
        }
        let groups = dq.0 / spec.q_group;
        if dk.0 / spec.k_group != groups {
            return shape_err("attention group count", dq, dk);
        }
        let dh = d / spec.heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = Mat::zeros(dq.0, d);
        let mut probs = Vec::with_capacity(groups * spec.heads);
        for g in 0..groups {
            for h in 0..spec.heads {
                let qg = qv.view((g * spec.q_group, h * dh), (spec.q_group, dh));
                let kg = kv.view((g * spec.k_group, h * dh), (spec.k_group, dh));
                let vg = vv.view((g * spec.k_group, h * dh), (spec.k_group, dh));
                let mut s = (qg * kg.transpose()) * scale;
                softmax_rows(&mut s);
                out.view_mut((g * spec.q_group, h * dh), (spec.q_group, dh))
                    .copy_from(&(&s * vg));
                probs.push(s);
            }
        }
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                spec,
                probs,
            },
        ))
    }

    /// Inverted dropout with a precomputed mask of `0` or `1/(1-p)`.
    pub fn dropout(&mut self, a: Var, mask: Mat<T>) -> Result<Var> {
        if self.dims(a) != mask.shape() {
            return shape_err("dropout", self.dims(a), mask.shape());
        }
        let v = self.value(a).component_mul(&mask);
        Ok(self.push(v, Op::Dropout(a, mask)))
    }

    /// Gradients of `<seed, value(out)>` with respect to every node.
    pub fn backward(&self, out: Var, seed: Mat<T>) -> Vec<Option<Mat<T>>> {
        let mut grads: Vec<Option<Mat<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        fn acc<T: Real>(grads: &mut [Option<Mat<T>>], v: Var, d: Mat<T>) {
            match &mut grads[v.0] {
                Some(g) => *g += d,
                slot => *slot = Some(d),
            }
        }
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].clone() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, &g * self.value(*b).transpose());
                    acc(&mut grads, *b, self.value(*a).transpose() * &g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, r) => {
                    acc(&mut grads, *r, sum_blocks(&g, 1));
                    acc(&mut grads, *a, g);
                }
                Op::AddTiled(a, b) => {
                    acc(&mut grads, *b, sum_blocks(&g, self.dims(*b).0));
                    acc(&mut grads, *a, g);
                }
                Op::TileRows(a) => acc(&mut grads, *a, sum_blocks(&g, self.dims(*a).0)),
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.component_mul(self.value(*b)));
                    acc(&mut grads, *b, g.component_mul(self.value(*a)));
                }
                Op::Sigmoid(a) => {
                    let s = &node.value;
                    acc(
                        &mut grads,
                        *a,
                        g.zip_map(s, |gi, si| gi * si * (T::one() - si)),
                    );
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, g.zip_map(x, |gi, xi| gi * gelu_grad(xi)));
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gam = self.value(*gamma);
                    let (rows, cols) = g.shape();
                    let c = T::of(cols as f64);
                    let mut dgamma = Mat::zeros(1, cols);
                    let mut dbeta = Mat::zeros(1, cols);
                    let mut dx = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for j in 0..cols {
                            let d = g[(r, j)] * gam[(0, j)];
                            sum_d += d;
                            sum_dx += d * xhat[(r, j)];
                            dgamma[(0, j)] += g[(r, j)] * xhat[(r, j)];
                            dbeta[(0, j)] += g[(r, j)];
                        }
                        for j in 0..cols {
                            let d = g[(r, j)] * gam[(0, j)];
                            dx[(r, j)] = inv_std[r] / c * (c * d - sum_d - xhat[(r, j)] * sum_dx);
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *beta, dbeta);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.dims(*a).1;
                    acc(&mut grads, *a, g.columns(0, ca).into_owned());
                    acc(&mut grads, *b, g.columns(ca, g.ncols() - ca).into_owned());
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.dims(*a).0;
                    acc(&mut grads, *a, g.rows(0, ra).into_owned());
                    acc(&mut grads, *b, g.rows(ra, g.nrows() - ra).into_owned());
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    spec,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qv.ncols();
                    let dh = d / spec.heads;
                    let scale = T::one() / T::of(dh as f64).sqrt();
                    let mut dq = Mat::zeros(qv.nrows(), d);
                    let mut dk = Mat::zeros(kv.nrows(), d);
                    let mut dv = Mat::zeros(vv.nrows(), d);
                    let groups = qv.nrows() / spec.q_group;
                    for gi in 0..groups {
                        for h in 0..spec.heads {
                            let p = &probs[gi * spec.heads + h];
                            let (qo, ko) =
                                ((gi * spec.q_group, h * dh), (gi * spec.k_group, h * dh));
                            let qs = (spec.q_group, dh);
                            let ks = (spec.k_group, dh);
                            let d_o = g.view(qo, qs);
                            let d_p = d_o * vv.view(ko, ks).transpose();
                            dv.view_mut(ko, ks).copy_from(&(p.transpose() * d_o));
                            let mut d_s = d_p.clone();
                            for r in 0..p.nrows() {
                                let dot = (0..p.ncols())
                                    .fold(T::zero(), |s, c| s + d_p[(r, c)] * p[(r, c)]);
                                for c in 0..p.ncols() {
                                    d_s[(r, c)] = p[(r, c)] * (d_p[(r, c)] - dot);
                                }
                            }
                            d_s *= scale;
                            dq.view_mut(qo, qs).copy_from(&(&d_s * kv.view(ko, ks)));
                            dk.view_mut(ko, ks)
                                .copy_from(&(d_s.transpose() * qv.view(qo, qs)));
                        }
                    }
                    acc(&mut grads, *q, dq);
                    acc(&mut grads, *k, dk);
                    acc(&mut grads, *v, dv);
                }
                Op::Dropout(a, mask) => acc(&mut grads, *a, g.component_mul(mask)),
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Mat<f64> {
        Mat::from_fn(rows, cols, f)
    }

    /// Central differences of `sum(seed .* out)` w.r.t. every entry of the leaf `x`.
    fn check(build: impl Fn(&mut Tape<f64>, Var) -> Var, x0: Mat<f64>) {
        let mut t = Tape::new();
        let x = t.leaf(x0.clone());
        let out = build(&mut t, x);
        let seed = m(t.value(out).nrows(), t.value(out).ncols(), |i, j| {
            0.3 + 0.1 * i as f64 - 0.07 * j as f64
        });
        let grads = t.backward(out, seed.clone());
        let an = grads[x.0].clone().unwrap();
        let f = |xv: Mat<f64>| {
            let mut t = Tape::new();
            let x = t.leaf(xv);
            let out = build(&mut t, x);
            t.value(out).component_mul(&seed).sum()
        };
        let h = 1e-6;
        for i in 0..x0.nrows() {
            for j in 0..x0.ncols() {
                let mut p = x0.clone();
                p[(i, j)] += h;
                let mut mn = x0.clone();
                mn[(i, j)] -= h;
                let fd = (f(p) - f(mn)) / (2.0 * h);
                assert!(
                    (fd - an[(i, j)]).abs() < 1e-7 * (1.0 + fd.abs()),
                    "({i},{j}) fd {fd} an {}",
                    an[(i, j)]
                );
            }
        }
    }

    fn input(r: usize, c: usize) -> Mat<f64> {
        m(r, c, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin())
    }

    #[test]
    fn elementwise_and_linear_ops() {
        check(|t, x| t.gelu(x), input(3, 4));
        check(|t, x| t.sigmoid(x), input(3, 4));
        check(
            |t, x| {
                let w = t.leaf(input(4, 2));
                t.matmul(x, w).unwrap()
            },
            input(3, 4),
        );
        check(
            |t, x| {
                let tiled = t.tile_rows(x, 3);
                let b = t.leaf(input(6, 4));
                t.add_tiled(b, x).unwrap();
                let y = t.mul(tiled, tiled).unwrap();
                let r = t.concat_rows(y, x).unwrap();
                t.concat_cols(r, r).unwrap()
            },
            input(2, 4),
        );
    }

    #[test]
    fn layer_norm_gradients() {
        check(
            |t, x| {
                let g = t.leaf(m(1, 5, |_, j| 0.5 + j as f64 * 0.2));
                let b = t.leaf(m(1, 5, |_, j| j as f64 * 0.1));
                t.layer_norm(x, g, b).unwrap()
            },
            input(3, 5),
        );
        // gradients with respect to the affine parameters
        check(
            |t, g| {
                let x = t.leaf(input(3, 5));
                let b = t.leaf(m(1, 5, |_, _| 0.0));
                t.layer_norm(x, g, b).unwrap()
            },
            m(1, 5, |_, j| 1.0 - j as f64 * 0.1),
        );
    }

    #[test]
    fn attention_gradients() {
        let spec = AttentionSpec {
            heads: 2,
            q_group: 2,
            k_group: 3,
        };
        check(
            |t, x| {
                let k = t.leaf(input(6, 4));
                t.attention(x, k, k, spec).unwrap()
            },
            input(4, 4),
        );
        check(
            |t, x| {
                let q = t.leaf(input(4, 4) * 0.5);
                t.attention(q, x, x, spec).unwrap()
            },
            input(6, 4),
        );
    }

    #[test]
    fn softmax_over_one_key_is_one() {
        let mut t = Tape::<f64>::new();
        let q = t.leaf(input(3, 4));
        let kv = t.leaf(input(1, 4));
        let spec = AttentionSpec {
            heads: 2,
            q_group: 3,
            k_group: 1,
        };
        let o = t.attention(q, kv, kv, spec).unwrap();
        for i in 0..3 {
            assert_eq!(t.value(o).row(i), t.value(kv).row(0));
        }
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::<f32>::new();
        let a = t.leaf(Mat::zeros(2, 3));
        let b = t.leaf(Mat::zeros(2, 3));
        assert!(t.matmul(a, b).is_err());
        let spec = AttentionSpec {
            heads: 2,
            q_group: 1,
            k_group: 1,
        };
        assert!(t.attention(a, b, b, spec).is_err());
    }
}
