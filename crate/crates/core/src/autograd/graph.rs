use std::ops::Range;

use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const GELU_C: f32 = 0.797_884_6; // sqrt(2 / pi)
const GELU_K: f32 = 0.044_715;

enum Op {
    Input,
    Param(ParamId),
    Gather { table: Var, ids: Vec<Option<u32>> },
    Add(Var, Var),
    AddBias(Var, Var),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Scale(Var, f32),
    Mul(Var, Var),
    Sum(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor, inv_std: Vec<f32> },
    Gelu(Var),
    Dropout { x: Var, mask: Tensor },
    Attention { q: Var, k: Var, v: Var, seq_len: usize, heads: usize, probs: Vec<Tensor> },
    GatherRows { x: Var, rows: Vec<usize> },
    SegmentMean { x: Var, groups: Vec<Vec<usize>> },
    L2Normalize { x: Var, norms: Vec<f32> },
    SoftmaxCrossEntropy { logits: Var, targets: Vec<u32>, probs: Tensor },
    Huber { pred: Var, targets: Vec<f32> },
    SetContrastive { sims: Var, blocks: SetBlocks, coef: Vec<(usize, usize, f64)> },
}

/// Row/column ownership of a keyword-by-object cosine matrix, and the
/// negative pairings per anchor movie.
#[derive(Debug, Clone, PartialEq)]
pub struct SetBlocks {
    /// Rows (keyword vectors) of movie `i`.
    pub x_rows: Vec<Range<usize>>,
    /// Columns (object vectors) of movie `j`.
    pub z_cols: Vec<Range<usize>>,
    /// For each anchor `i`, the posters `j` paired with its keywords as negatives.
    pub negatives: Vec<Vec<usize>>,
}

struct Node {
    value: Option<Tensor>,
    /// Losses keep their double-precision value for diagnostics and checks.
    exact: Option<f64>,
    op: Op,
    requires_grad: bool,
}

/// A single forward pass recorded for reverse-mode differentiation.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to parameters and graph nodes.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of a leaf created with [`Graph::leaf`].
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

/// `ln(Σ exp)` per row, stable.
fn log_softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f32::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f32>().ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

pub fn huber_value(residual: f64) -> f64 {
    let r = residual.abs();
    if r < 1.0 {
        0.5 * r * r
    } else {
        r - 0.5
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.params.value(id),
            _ => node.value.as_ref().expect("non-param nodes hold values"),
        }
    }

    pub fn scalar(&self, v: Var) -> f32 {
        self.value(v)[[0, 0]]
    }

    /// Scalar value in double precision when the node computed one.
    pub fn scalar_f64(&self, v: Var) -> f64 {
        self.nodes[v.0].exact.unwrap_or_else(|| self.scalar(v) as f64)
    }

    fn push_loss(&mut self, loss: f64, op: Op, requires_grad: bool) -> Var {
        let v = self.push(Array2::from_elem((1, 1), loss as f32), op, requires_grad);
        self.nodes[v.0].exact = Some(loss);
        v
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            exact: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let requires_grad = self.params.get(id).trainable;
        self.nodes.push(Node {
            value: None,
            exact: None,
            op: Op::Param(id),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    /// An input whose gradient is tracked.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, true)
    }

    /// Rows of `table` by id; `None` yields a zero row.
    pub fn gather(&mut self, table: Var, ids: Vec<Option<u32>>) -> Var {
        let t = self.value(table);
        let mut out = Tensor::zeros((ids.len(), t.ncols()));
        for (mut row, id) in out.rows_mut().into_iter().zip(&ids) {
            if let Some(id) = id {
                row.assign(&t.row(*id as usize));
            }
        }
        let rg = self.rg(table);
        self.push(out, Op::Gather { table, ids }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    /// `a + bias` with `bias` of shape `[1, n]` broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let out = self.value(a) + &self.value(bias).row(0);
        let rg = self.rg(a) || self.rg(bias);
        self.push(out, Op::AddBias(a, bias), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// `a bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b).t());
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMulNt(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let out = self.value(a) * s;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// Sum of all entries as a `[1, 1]` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().map(|&x| x as f64).sum::<f64>();
        let rg = self.rg(a);
        self.push_loss(total, Op::Sum(a), rg)
    }

    /// `linear(x) = x W + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        let h = self.matmul(x, weight);
        self.add_bias(h, bias)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f32;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let is = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &xhat * &self.value(gamma).row(0) + &self.value(beta).row(0);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self
            .value(x)
            .mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_K * v * v * v)).tanh()));
        let rg = self.rg(x);
        self.push(out, Op::Gelu(x), rg)
    }

    /// Elementwise product with a pre-scaled keep mask.
    pub fn dropout(&mut self, x: Var, mask: Tensor) -> Var {
        let out = self.value(x) * &mask;
        let rg = self.rg(x);
        self.push(out, Op::Dropout { x, mask }, rg)
    }

    /// Multi-head scaled dot-product attention over `rows / seq_len`
    /// independent sequences. Keys with `key_mask == false` get zero weight.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq_len: usize, heads: usize, key_mask: &[bool]) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = qv.dim();
        if rows % seq_len != 0 || d % heads != 0 || key_mask.len() != rows {
            return Err(Error::Shape(format!(
                "attention over {rows}x{d} with seq_len {seq_len}, {heads} heads, mask {}",
                key_mask.len()
            )));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let mut out = Tensor::zeros((rows, d));
        let mut probs = Vec::with_capacity(rows / seq_len * heads);
        for b in 0..rows / seq_len {
            let r = b * seq_len..(b + 1) * seq_len;
            let mask = &key_mask[r.clone()];
            if !mask.iter().any(|&m| m) {
                return Err(Error::Shape(format!("sequence {b} has no attendable slots")));
            }
            for h in 0..heads {
                let c = h * dh..(h + 1) * dh;
                let qs = qv.slice(s![r.clone(), c.clone()]);
                let ks = kv.slice(s![r.clone(), c.clone()]);
                let vs = vv.slice(s![r.clone(), c.clone()]);
                let mut p = qs.dot(&ks.t()) * scale;
                for mut row in p.rows_mut() {
                    let max = row
                        .iter()
                        .zip(mask)
                        .filter(|(_, &m)| m)
                        .fold(f32::NEG_INFINITY, |a, (&x, _)| a.max(x));
                    let mut sum = 0.0;
                    for (x, &m) in row.iter_mut().zip(mask) {
                        *x = if m { (*x - max).exp() } else { 0.0 };
                        sum += *x;
                    }
                    row.mapv_inplace(|x| x / sum);
                }
                out.slice_mut(s![r.clone(), c]).assign(&p.dot(&vs));
                probs.push(p);
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(out, Op::Attention { q, k, v, seq_len, heads, probs }, rg))
    }

    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let xv = self.value(x);
        let out = xv.select(Axis(0), &rows);
        let rg = self.rg(x);
        self.push(out, Op::GatherRows { x, rows }, rg)
    }

    /// Row `g` of the output is the mean of `x` over `groups[g]`.
    pub fn segment_mean(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let xv = self.value(x);
        let mut out = Tensor::zeros((groups.len(), xv.ncols()));
        for (mut o, g) in out.rows_mut().into_iter().zip(&groups) {
            if g.is_empty() {
                return Err(Error::Shape("mean over an empty group".into()));
            }
            for &r in g {
                o += &xv.row(r);
            }
            o /= g.len() as f32;
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::SegmentMean { x, groups }, rg))
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        let mut norms = Vec::with_capacity(out.nrows());
        for mut row in out.rows_mut() {
            let n = row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt() as f32;
            if n == 0.0 || !n.is_finite() {
                return Err(Error::Numeric("cosine of a zero-norm vector".into()));
            }
            row /= n;
            norms.push(n);
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::L2Normalize { x, norms }, rg))
    }

    /// Mean softmax cross-entropy over rows; zero rows give a zero loss.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Vec<u32>) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), targets.len());
        let logp = log_softmax_rows(lv);
        let n = targets.len().max(1) as f64;
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -(logp[[r, t as usize]] as f64))
            .sum::<f64>()
            / n;
        let probs = logp.mapv(f32::exp);
        let rg = self.rg(logits);
        self.push_loss(loss, Op::SoftmaxCrossEntropy { logits, targets, probs }, rg)
    }

    /// Mean Huber loss between a `[n, 1]` prediction column and targets.
    pub fn huber(&mut self, pred: Var, targets: Vec<f32>) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.nrows(), targets.len());
        let n = targets.len().max(1) as f64;
        let loss = pv
            .column(0)
            .iter()
            .zip(&targets)
            .map(|(&p, &y)| huber_value(y as f64 - p as f64))
            .sum::<f64>()
            / n;
        let rg = self.rg(pred);
        self.push_loss(loss, Op::Huber { pred, targets }, rg)
    }

    /// Contrastive set loss over a keyword-by-object cosine matrix.
    ///
    /// With `S(i, j)` the sum of `exp` over the block of rows of movie `i`
    /// and columns of movie `j`, anchor `i` contributes
    /// `-ln(S(i,i) / (S(i,i) + Σ_neg S(i,j)))`; the loss is the mean over anchors.
    pub fn set_contrastive(&mut self, sims: Var, blocks: SetBlocks) -> Result<Var> {
        let c = self.value(sims);
        let n = blocks.x_rows.len();
        if n == 0 || blocks.z_cols.len() != n || blocks.negatives.len() != n {
            return Err(Error::Shape("set contrastive blocks are inconsistent".into()));
        }
        let block_sum = |i: usize, j: usize| -> f64 {
            c.slice(s![blocks.x_rows[i].clone(), blocks.z_cols[j].clone()])
                .iter()
                .map(|&x| (x as f64).exp())
                .sum()
        };
        let mut loss = 0.0;
        let mut coef = Vec::new();
        for i in 0..n {
            let pos = block_sum(i, i);
            let negs: Vec<(usize, f64)> = blocks.negatives[i].iter().map(|&j| (j, block_sum(i, j))).collect();
            let total = pos + negs.iter().map(|(_, s)| s).sum::<f64>();
            loss += total.ln() - pos.ln();
            coef.push((i, i, (1.0 / total - 1.0 / pos) / n as f64));
            for (j, _) in negs {
                coef.push((i, j, 1.0 / total / n as f64));
            }
        }
        let loss = loss / n as f64;
        let rg = self.rg(sims);
        Ok(self.push_loss(loss, Op::SetContrastive { sims, blocks, coef }, rg))
    }

    /// Reverse pass from a `[1, 1]` loss node.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut pgrads: Vec<Option<Tensor>> = (0..self.params.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Input) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let send = |grads: &mut Vec<Option<Tensor>>, v: Var, t: Tensor| {
                if self.rg(v) {
                    accumulate(&mut grads[v.0], t);
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => accumulate(&mut pgrads[id.0], g.clone()),
                Op::Gather { table, ids } => {
                    if self.rg(*table) {
                        let mut dt = Tensor::zeros(self.value(*table).raw_dim());
                        for (row, id) in g.rows().into_iter().zip(ids) {
                            if let Some(id) = id {
                                let mut t = dt.row_mut(*id as usize);
                                t += &row;
                            }
                        }
                        send(&mut grads, *table, dt);
                    }
                }
                Op::Add(a, b) => {
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *b, g.clone());
                }
                Op::AddBias(a, bias) => {
                    send(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    send(&mut grads, *a, g.clone());
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        send(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if self.rg(*b) {
                        send(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::MatMulNt(a, b) => {
                    if self.rg(*a) {
                        send(&mut grads, *a, g.dot(self.value(*b)));
                    }
                    if self.rg(*b) {
                        send(&mut grads, *b, g.t().dot(self.value(*a)));
                    }
                }
                Op::Scale(a, s) => send(&mut grads, *a, &g * *s),
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        send(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.rg(*b) {
                        send(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).raw_dim();
                    send(&mut grads, *a, Tensor::from_elem(shape, g[[0, 0]]));
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    if self.rg(*gamma) {
                        send(&mut grads, *gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.rg(*beta) {
                        send(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.rg(*x) {
                        let dxhat = &g * &self.value(*gamma).row(0);
                        let n = xhat.ncols() as f32;
                        let mut dx = Tensor::zeros(xhat.raw_dim());
                        for r in 0..xhat.nrows() {
                            let dh = dxhat.row(r);
                            let xh = xhat.row(r);
                            let sum_d = dh.sum();
                            let sum_dx = dh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f32>();
                            let is = inv_std[r];
                            Zip::from(dx.row_mut(r)).and(&dh).and(&xh).for_each(|o, &d, &xv| {
                                *o = is / n * (n * d - sum_d - xv * sum_dx);
                            });
                        }
                        send(&mut grads, *x, dx);
                    }
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let mut dx = g.clone();
                    Zip::from(&mut dx).and(xv).for_each(|d, &v| {
                        let t = (GELU_C * (v + GELU_K * v * v * v)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v);
                        *d *= 0.5 * (1.0 + t) + 0.5 * v * dt;
                    });
                    send(&mut grads, *x, dx);
                }
                Op::Dropout { x, mask } => send(&mut grads, *x, &g * mask),
                Op::Attention { q, k, v, seq_len, heads, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (rows, d) = qv.dim();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f32).sqrt();
                    let mut dq = Tensor::zeros((rows, d));
                    let mut dk = Tensor::zeros((rows, d));
                    let mut dv = Tensor::zeros((rows, d));
                    for b in 0..rows / seq_len {
                        let r = b * seq_len..(b + 1) * seq_len;
                        for h in 0..*heads {
                            let c = h * dh..(h + 1) * dh;
                            let p = &probs[b * heads + h];
                            let go = g.slice(s![r.clone(), c.clone()]);
                            let qs = qv.slice(s![r.clone(), c.clone()]);
                            let ks = kv.slice(s![r.clone(), c.clone()]);
                            let vs = vv.slice(s![r.clone(), c.clone()]);
                            dv.slice_mut(s![r.clone(), c.clone()]).assign(&p.t().dot(&go));
                            let dp = go.dot(&vs.t());
                            let mut ds = &dp * p;
                            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                                let dot: f32 = row.sum();
                                Zip::from(&mut row).and(&prow).for_each(|x, &pp| *x -= pp * dot);
                            }
                            ds *= scale;
                            dq.slice_mut(s![r.clone(), c.clone()]).assign(&ds.dot(&ks));
                            dk.slice_mut(s![r.clone(), c.clone()]).assign(&ds.t().dot(&qs));
                        }
                    }
                    send(&mut grads, *q, dq);
                    send(&mut grads, *k, dk);
                    send(&mut grads, *v, dv);
                }
                Op::GatherRows { x, rows } => {
                    let mut dx = Tensor::zeros(self.value(*x).raw_dim());
                    for (row, &r) in g.rows().into_iter().zip(rows) {
                        let mut t = dx.row_mut(r);
                        t += &row;
                    }
                    send(&mut grads, *x, dx);
                }
                Op::SegmentMean { x, groups } => {
                    let mut dx = Tensor::zeros(self.value(*x).raw_dim());
                    for (row, grp) in g.rows().into_iter().zip(groups) {
                        let w = 1.0 / grp.len() as f32;
                        for &r in grp {
                            let mut t = dx.row_mut(r);
                            t.scaled_add(w, &row);
                        }
                    }
                    send(&mut grads, *x, dx);
                }
                Op::L2Normalize { x, norms } => {
                    let y = node.value.as_ref().expect("value");
                    let mut dx = g.clone();
                    for ((mut d, yr), &n) in dx.rows_mut().into_iter().zip(y.rows()).zip(norms) {
                        let dot: f32 = d.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                        Zip::from(&mut d).and(&yr).for_each(|dv, &yv| *dv = (*dv - dot * yv) / n);
                    }
                    send(&mut grads, *x, dx);
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let scale = g[[0, 0]] / targets.len().max(1) as f32;
                    let mut dl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        dl[[r, t as usize]] -= 1.0;
                    }
                    dl *= scale;
                    send(&mut grads, *logits, dl);
                }
                Op::Huber { pred, targets } => {
                    let pv = self.value(*pred);
                    let scale = g[[0, 0]] / targets.len().max(1) as f32;
                    let mut dp = Tensor::zeros(pv.raw_dim());
                    for (r, &y) in targets.iter().enumerate() {
                        let res = pv[[r, 0]] - y;
                        dp[[r, 0]] = scale * res.clamp(-1.0, 1.0);
                    }
                    send(&mut grads, *pred, dp);
                }
                Op::SetContrastive { sims, blocks, coef } => {
                    let c = self.value(*sims);
                    let up = g[[0, 0]] as f64;
                    let mut dc = Tensor::zeros(c.raw_dim());
                    for &(i, j, w) in coef {
                        let rows = blocks.x_rows[i].clone();
                        let cols = blocks.z_cols[j].clone();
                        Zip::from(dc.slice_mut(s![rows.clone(), cols.clone()]))
                            .and(c.slice(s![rows, cols]))
                            .for_each(|d, &x| *d += (up * w * (x as f64).exp()) as f32);
                    }
                    send(&mut grads, *sims, dc);
                }
            }
        }
        Gradients {
            nodes: grads,
            params: pgrads,
        }
    }
}
