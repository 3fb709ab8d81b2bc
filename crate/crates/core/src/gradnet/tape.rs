//! A small reverse-mode differentiation tape over row-major 2-D tensors.
//!
//! Every operation appends a node; [`Tape::backward`] walks the nodes in
//! reverse and accumulates into the `grad` buffers of leaves created with
//! `requires_grad`. Buffers are never cleared implicitly, so calling
//! `backward` twice on the same loss doubles them.

use crate::error::{Error, Result};
use crate::matcore::{dot, gemm, gemm_strided};

/// Dense tensor with optional gradient buffer. All tensors on the tape are
/// two-dimensional; a scalar has shape `[1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool) -> Self {
        assert_eq!(values.len(), rows * cols, "tensor length must match shape");
        Self {
            shape: vec![rows, cols],
            values,
            requires_grad,
            grad: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Gelu { src: Var, t: Vec<f64> },
    Gather { src: Var, rows: Vec<usize> },
    ConcatRows(Var, Var),
    Tile { src: Var, times: usize },
    Reshape(Var),
    Scale { src: Var, factor: f64 },
    ScaleGrad { src: Var, factor: f64 },
    Attention(Box<AttentionOp>),
    Mse { pred: Var, target: Vec<f64> },
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug)]
struct AttentionOp {
    q: Var,
    k: Var,
    v: Var,
    q_seg: usize,
    kv_seg: usize,
    scale: f64,
    /// Softmax weights, one `q_seg x kv_seg` block per segment.
    probs: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    tensor: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu_tanh(x: f64) -> f64 {
    (GELU_C * (x + GELU_A * x * x * x)).tanh()
}

/// Derivative given `t = gelu_tanh(x)`.
fn gelu_grad(x: f64, t: f64) -> f64 {
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].tensor.values
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].tensor;
        (t.rows(), t.cols())
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    /// Zeroes every leaf gradient buffer.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = n.tensor.grad.as_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    /// Softmax weights recorded by an attention node.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention(a) => Some(&a.probs),
            _ => None,
        }
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> Var {
        self.nodes.push(Node { tensor, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad
    }

    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Leaf)
    }

    pub fn param(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        self.leaf(Tensor::new(rows, cols, values, true))
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Var {
        self.leaf(Tensor::new(rows, cols, values, false))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::ShapeMismatch(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(m, n, out, rg), Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch(format!(
                "add {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (m, n) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(m, n, out, rg), Op::Add(a, b)))
    }

    /// Adds a `1 x n` bias to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(bias) != (1, n) {
            return Err(Error::ShapeMismatch(format!(
                "bias {:?} for {m}x{n}",
                self.shape(bias)
            )));
        }
        let b = self.value(bias).to_vec();
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(n) {
            for (x, y) in row.iter_mut().zip(&b) {
                *x += y;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Tensor::new(m, n, out, rg), Op::AddBias(a, bias)))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let t: Vec<f64> = self.value(a).iter().map(|x| gelu_tanh(*x)).collect();
        let out = self.value(a).iter().zip(&t).map(|(x, t)| 0.5 * x * (1.0 + t)).collect();
        let rg = self.rg(a);
        self.push(Tensor::new(m, n, out, rg), Op::Gelu { src: a, t })
    }

    /// Selects rows of `src` by index (repeats allowed).
    pub fn gather(&mut self, src: Var, rows: Vec<usize>) -> Result<Var> {
        let (m, n) = self.shape(src);
        if let Some(bad) = rows.iter().find(|r| **r >= m) {
            return Err(Error::ShapeMismatch(format!("row {bad} out of {m}")));
        }
        let vals = self.value(src);
        let mut out = Vec::with_capacity(rows.len() * n);
        for r in &rows {
            out.extend_from_slice(&vals[r * n..(r + 1) * n]);
        }
        let rg = self.rg(src);
        let count = rows.len();
        Ok(self.push(Tensor::new(count, n, out, rg), Op::Gather { src, rows }))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, n) = self.shape(a);
        let (mb, nb) = self.shape(b);
        if n != nb {
            return Err(Error::ShapeMismatch(format!("concat {ma}x{n} with {mb}x{nb}")));
        }
        let mut out = self.value(a).to_vec();
        out.extend_from_slice(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(ma + mb, n, out, rg), Op::ConcatRows(a, b)))
    }

    /// Stacks `times` copies of `src` vertically.
    pub fn tile(&mut self, src: Var, times: usize) -> Var {
        let (m, n) = self.shape(src);
        let out = self.value(src).repeat(times);
        let rg = self.rg(src);
        self.push(Tensor::new(m * times, n, out, rg), Op::Tile { src, times })
    }

    /// Reinterprets the row-major buffer with a new shape.
    pub fn reshape(&mut self, src: Var, rows: usize, cols: usize) -> Result<Var> {
        let (m, n) = self.shape(src);
        if m * n != rows * cols {
            return Err(Error::ShapeMismatch(format!("reshape {m}x{n} to {rows}x{cols}")));
        }
        let out = self.value(src).to_vec();
        let rg = self.rg(src);
        Ok(self.push(Tensor::new(rows, cols, out, rg), Op::Reshape(src)))
    }

    pub fn scale(&mut self, src: Var, factor: f64) -> Var {
        let (m, n) = self.shape(src);
        let out = self.value(src).iter().map(|x| x * factor).collect();
        let rg = self.rg(src);
        self.push(Tensor::new(m, n, out, rg), Op::Scale { src, factor })
    }

    /// Identity on values; multiplies the incoming gradient by `factor` on the
    /// way back.
    pub fn scale_grad(&mut self, src: Var, factor: f64) -> Result<Var> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(Error::InvalidDecay(factor));
        }
        let (m, n) = self.shape(src);
        let out = self.value(src).to_vec();
        let rg = self.rg(src);
        Ok(self.push(Tensor::new(m, n, out, rg), Op::ScaleGrad { src, factor }))
    }

    /// Segmented scaled dot-product attention. Rows of `q` are split into
    /// segments of `q_seg` rows, rows of `k`/`v` into segments of `kv_seg`
    /// rows; segment `s` of `q` attends only to segment `s` of `k`/`v`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, q_seg: usize, kv_seg: usize) -> Result<Var> {
        let (qm, d) = self.shape(q);
        let (km, dk) = self.shape(k);
        let (vm, dv) = self.shape(v);
        if dk != d || km != vm || q_seg == 0 || kv_seg == 0 || qm % q_seg != 0 || km % kv_seg != 0 {
            return Err(Error::ShapeMismatch(format!(
                "attention q {qm}x{d}, k {km}x{dk}, v {vm}x{dv}, segments {q_seg}/{kv_seg}"
            )));
        }
        let segs = qm / q_seg;
        if km / kv_seg != segs {
            return Err(Error::ShapeMismatch(format!(
                "attention has {segs} query segments but {} key segments",
                km / kv_seg
            )));
        }
        let scale = 1.0 / (d as f64).sqrt();
        let (qv, kvv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut probs = vec![0.0; segs * q_seg * kv_seg];
        let mut out = vec![0.0; qm * dv];
        let mut row = vec![0.0; kv_seg];
        for s in 0..segs {
            for i in 0..q_seg {
                let qi = s * q_seg + i;
                let qrow = &qv[qi * d..(qi + 1) * d];
                let mut max = f64::NEG_INFINITY;
                for (j, r) in row.iter_mut().enumerate() {
                    let kj = s * kv_seg + j;
                    let krow = &kvv[kj * d..(kj + 1) * d];
                    *r = dot(qrow, krow) * scale;
                    max = max.max(*r);
                }
                let mut total = 0.0;
                for r in row.iter_mut() {
                    *r = (*r - max).exp();
                    total += *r;
                }
                let p = &mut probs[(s * q_seg + i) * kv_seg..(s * q_seg + i + 1) * kv_seg];
                let orow = &mut out[qi * dv..(qi + 1) * dv];
                for (j, (pj, r)) in p.iter_mut().zip(&row).enumerate() {
                    *pj = r / total;
                    let vj = s * kv_seg + j;
                    for (o, x) in orow.iter_mut().zip(&vv[vj * dv..(vj + 1) * dv]) {
                        *o += *pj * x;
                    }
                }
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        let op = AttentionOp {
            q,
            k,
            v,
            q_seg,
            kv_seg,
            scale,
            probs,
        };
        Ok(self.push(Tensor::new(qm, dv, out, rg), Op::Attention(Box::new(op))))
    }

    /// Mean squared error over every element.
    pub fn mse(&mut self, pred: Var, target: Vec<f64>) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(Error::ShapeMismatch(format!(
                "mse prediction has {} elements, target {}",
                p.len(),
                target.len()
            )));
        }
        let n = p.len() as f64;
        let loss = p.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        let rg = self.rg(pred);
        Ok(self.push(Tensor::new(1, 1, vec![loss], rg), Op::Mse { pred, target }))
    }

    /// `Σ wᵢ · termᵢ` over scalar terms.
    pub fn weighted_sum(&mut self, terms: Vec<(Var, f64)>) -> Result<Var> {
        let mut total = 0.0;
        let mut rg = false;
        for (v, w) in &terms {
            if self.shape(*v) != (1, 1) {
                return Err(Error::NotScalar(vec![self.shape(*v).0, self.shape(*v).1]));
            }
            total += w * self.value(*v)[0];
            rg |= self.rg(*v);
        }
        Ok(self.push(Tensor::new(1, 1, vec![total], rg), Op::WeightedSum(terms)))
    }

    /// Back-propagates from a scalar `loss`, adding into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let t = self.tensor(loss);
        if t.len() != 1 {
            return Err(Error::NotScalar(t.shape.clone()));
        }
        if matches!(self.nodes[loss.0].op, Op::Leaf) || !t.requires_grad {
            return Err(Error::NoGraph);
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].tensor.requires_grad {
                continue;
            }
            self.propagate(idx, g, &mut adj);
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize, g: Vec<f64>, adj: &mut [Option<Vec<f64>>]) {
        if matches!(self.nodes[idx].op, Op::Leaf) {
            let t = &mut self.nodes[idx].tensor;
            let buf = t.grad.get_or_insert_with(|| vec![0.0; g.len()]);
            for (b, x) in buf.iter_mut().zip(&g) {
                *b += x;
            }
            return;
        }
        let nodes = &self.nodes;
        let (rows, cols) = (nodes[idx].tensor.rows(), nodes[idx].tensor.cols());
        // Helper adding a contribution to an input's adjoint.
        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            adj[v.0].get_or_insert_with(|| vec![0.0; len])
        }
        let rg = |v: Var| nodes[v.0].tensor.requires_grad;
        let len = |v: Var| nodes[v.0].tensor.len();
        match &nodes[idx].op {
            Op::Leaf => unreachable!(),
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (m, k) = (nodes[a.0].tensor.rows(), nodes[a.0].tensor.cols());
                let n = cols;
                if rg(a) {
                    // dA = G Bᵀ
                    let bv = &nodes[b.0].tensor.values;
                    let da = acc(adj, a, m * k);
                    gemm_strided(&g, (n, 1), bv, (1, n), da, m, n, k);
                }
                if rg(b) {
                    // dB = Aᵀ G
                    let av = &nodes[a.0].tensor.values;
                    let db = acc(adj, b, k * n);
                    gemm_strided(av, (1, k), &g, (n, 1), db, k, m, n);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if rg(v) {
                        for (d, x) in acc(adj, v, g.len()).iter_mut().zip(&g) {
                            *d += x;
                        }
                    }
                }
            }
            Op::AddBias(a, bias) => {
                let (a, bias) = (*a, *bias);
                if rg(a) {
                    for (d, x) in acc(adj, a, g.len()).iter_mut().zip(&g) {
                        *d += x;
                    }
                }
                if rg(bias) {
                    let db = acc(adj, bias, cols);
                    for row in g.chunks_exact(cols) {
                        for (d, x) in db.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Gelu { src: a, t } => {
                let a = *a;
                if rg(a) {
                    let x = &nodes[a.0].tensor.values;
                    let da = acc(adj, a, g.len());
                    for (((d, gi), xi), ti) in da.iter_mut().zip(&g).zip(x).zip(t) {
                        *d += gi * gelu_grad(*xi, *ti);
                    }
                }
            }
            Op::Gather { src, rows: sel } => {
                let src = *src;
                if rg(src) {
                    let ds = acc(adj, src, len(src));
                    for (i, r) in sel.iter().enumerate() {
                        for (d, x) in ds[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(&g[i * cols..(i + 1) * cols])
                        {
                            *d += x;
                        }
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let (a, b) = (*a, *b);
                let split = len(a);
                if rg(a) {
                    for (d, x) in acc(adj, a, split).iter_mut().zip(&g[..split]) {
                        *d += x;
                    }
                }
                if rg(b) {
                    for (d, x) in acc(adj, b, g.len() - split).iter_mut().zip(&g[split..]) {
                        *d += x;
                    }
                }
            }
            Op::Tile { src, times } => {
                let src = *src;
                if rg(src) {
                    let n = len(src);
                    let ds = acc(adj, src, n);
                    for t in 0..*times {
                        for (d, x) in ds.iter_mut().zip(&g[t * n..(t + 1) * n]) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Reshape(src) => {
                let src = *src;
                if rg(src) {
                    for (d, x) in acc(adj, src, g.len()).iter_mut().zip(&g) {
                        *d += x;
                    }
                }
            }
            Op::Scale { src, factor } | Op::ScaleGrad { src, factor } => {
                let (src, factor) = (*src, *factor);
                if rg(src) {
                    for (d, x) in acc(adj, src, g.len()).iter_mut().zip(&g) {
                        *d += factor * x;
                    }
                }
            }
            Op::Attention(op) => {
                let AttentionOp {
                    q,
                    k,
                    v,
                    q_seg,
                    kv_seg,
                    scale,
                    probs,
                } = op.as_ref();
                let (q, k, v, q_seg, kv_seg, scale) = (*q, *k, *v, *q_seg, *kv_seg, *scale);
                let d = nodes[q.0].tensor.cols();
                let dv = cols;
                let segs = rows / q_seg;
                let (qv, kv, vv) = (
                    &nodes[q.0].tensor.values,
                    &nodes[k.0].tensor.values,
                    &nodes[v.0].tensor.values,
                );
                let mut dq = vec![0.0; len(q)];
                let mut dk = vec![0.0; len(k)];
                let mut dvv = vec![0.0; len(v)];
                let mut ds = vec![0.0; kv_seg];
                for s in 0..segs {
                    for i in 0..q_seg {
                        let qi = s * q_seg + i;
                        let p = &probs[qi * kv_seg..(qi + 1) * kv_seg];
                        let grow = &g[qi * dv..(qi + 1) * dv];
                        // dP_ij = g_i · v_j ; dV_j += P_ij g_i
                        let mut dot_pd = 0.0;
                        for j in 0..kv_seg {
                            let vj = s * kv_seg + j;
                            let vrow = &vv[vj * dv..(vj + 1) * dv];
                            let dp = dot(grow, vrow);
                            ds[j] = dp;
                            dot_pd += dp * p[j];
                            for (dst, x) in dvv[vj * dv..(vj + 1) * dv].iter_mut().zip(grow) {
                                *dst += p[j] * x;
                            }
                        }
                        for j in 0..kv_seg {
                            ds[j] = p[j] * (ds[j] - dot_pd) * scale;
                        }
                        let qrow = &qv[qi * d..(qi + 1) * d];
                        let dqrow = &mut dq[qi * d..(qi + 1) * d];
                        for j in 0..kv_seg {
                            let kj = s * kv_seg + j;
                            let krow = &kv[kj * d..(kj + 1) * d];
                            let sj = ds[j];
                            for (dst, x) in dqrow.iter_mut().zip(krow) {
                                *dst += sj * x;
                            }
                            for (dst, x) in dk[kj * d..(kj + 1) * d].iter_mut().zip(qrow) {
                                *dst += sj * x;
                            }
                        }
                    }
                }
                for (var, buf) in [(q, dq), (k, dk), (v, dvv)] {
                    if rg(var) {
                        for (dst, x) in acc(adj, var, buf.len()).iter_mut().zip(&buf) {
                            *dst += x;
                        }
                    }
                }
            }
            Op::Mse { pred, target } => {
                let pred = *pred;
                if rg(pred) {
                    let p = &nodes[pred.0].tensor.values;
                    let c = 2.0 * g[0] / p.len() as f64;
                    let dp = acc(adj, pred, p.len());
                    for ((d, a), b) in dp.iter_mut().zip(p).zip(target) {
                        *d += c * (a - b);
                    }
                }
            }
            Op::WeightedSum(terms) => {
                for (v, w) in terms {
                    if rg(*v) {
                        acc(adj, *v, 1)[0] += w * g[0];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_least_squares_gradient_is_exact() {
        // With two outputs the mean squared error is exactly ½‖Wx − t‖².
        let mut tape = Tape::new();
        let w = tape.param(2, 3, vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]);
        let x = tape.constant(3, 1, vec![1.0, 2.0, -1.0]);
        let y = tape.matmul(w, x).unwrap();
        let t = vec![0.3, -0.2];
        let loss = tape.mse(y, t.clone()).unwrap();
        tape.backward(loss).unwrap();
        let wx = tape.value(y).to_vec();
        let xv = [1.0, 2.0, -1.0];
        let g = tape.grad(w).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let want = (wx[i] - t[i]) * xv[j];
                assert!((g[i * 3 + j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn second_backward_doubles_gradients() {
        let mut tape = Tape::new();
        let w = tape.param(1, 2, vec![1.0, -2.0]);
        let x = tape.constant(2, 1, vec![3.0, 0.5]);
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.mse(y, vec![1.0]).unwrap();
        tape.backward(loss).unwrap();
        let once = tape.grad(w).unwrap().to_vec();
        tape.backward(loss).unwrap();
        let twice = tape.grad(w).unwrap();
        for (a, b) in once.iter().zip(twice) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let w = tape.param(1, 2, vec![1.0, 2.0]);
        assert_eq!(tape.backward(w), Err(Error::NotScalar(vec![1, 2])));
        let s = tape.param(1, 1, vec![1.0]);
        assert_eq!(tape.backward(s), Err(Error::NoGraph));
    }

    #[test]
    fn single_key_attention_weight_is_one() {
        let mut tape = Tape::new();
        let q = tape.param(1, 2, vec![0.3, -0.1]);
        let k = tape.param(1, 2, vec![5.0, 2.0]);
        let v = tape.param(1, 2, vec![1.0, 2.0]);
        let o = tape.attention(q, k, v, 1, 1).unwrap();
        assert_eq!(tape.attention_weights(o).unwrap(), &[1.0]);
        assert_eq!(tape.value(o), &[1.0, 2.0]);
    }

    #[test]
    fn scale_grad_rejects_out_of_range() {
        let mut tape = Tape::new();
        let x = tape.param(1, 1, vec![1.0]);
        assert_eq!(tape.scale_grad(x, 1.5), Err(Error::InvalidDecay(1.5)));
        assert_eq!(tape.scale_grad(x, -0.1), Err(Error::InvalidDecay(-0.1)));
    }

    fn finite_difference_check(build: impl Fn(&mut Tape, &[f64]) -> (Var, Var), x0: Vec<f64>) {
        let mut tape = Tape::new();
        let (x, loss) = build(&mut tape, &x0);
        tape.backward(loss).unwrap();
        let g = tape.grad(x).unwrap().to_vec();
        let h = 1e-6;
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            xp[i] += h;
            let mut xm = x0.clone();
            xm[i] -= h;
            let mut tp = Tape::new();
            let (_, lp) = build(&mut tp, &xp);
            let mut tm = Tape::new();
            let (_, lm) = build(&mut tm, &xm);
            let fd = (tp.value(lp)[0] - tm.value(lm)[0]) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "i={i} fd={fd} an={}", g[i]);
        }
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        let build = |tape: &mut Tape, xs: &[f64]| {
            let x = tape.param(4, 3, xs.to_vec());
            let wq = tape.constant(3, 3, vec![0.2, -0.3, 0.5, 0.1, 0.7, -0.2, -0.4, 0.3, 0.6]);
            let q = tape.matmul(x, wq).unwrap();
            let att = tape.attention(q, x, x, 2, 2).unwrap();
            let act = tape.gelu(att);
            let loss = tape.mse(act, vec![0.1; 12]).unwrap();
            (x, loss)
        };
        let x0 = vec![0.3, -0.5, 0.8, 1.1, -0.2, 0.4, 0.0, 0.9, -0.7, 0.6, 0.2, -1.0];
        finite_difference_check(build, x0);
    }

    #[test]
    fn structural_ops_gradients_match_finite_differences() {
        let build = |tape: &mut Tape, xs: &[f64]| {
            let x = tape.param(2, 3, xs.to_vec());
            let b = tape.param(1, 3, vec![0.1, 0.2, 0.3]);
            let xb = tape.add_bias(x, b).unwrap();
            let t = tape.tile(xb, 2);
            let c = tape.concat_rows(t, x).unwrap();
            let gth = tape.gather(c, vec![0, 5, 5, 2]).unwrap();
            let r = tape.reshape(gth, 3, 4).unwrap();
            let s = tape.scale_grad(r, 0.5).unwrap();
            let l1 = tape.mse(s, vec![0.0; 12]).unwrap();
            let l2 = tape.mse(gth, vec![1.0; 12]).unwrap();
            let loss = tape.weighted_sum(vec![(l1, 1.0), (l2, 0.3)]).unwrap();
            (x, loss)
        };
        // ScaleGrad halves the l1 path only in backward, so compare against a
        // forward-equivalent build without it.
        let x0 = vec![0.5, -1.0, 0.25, 2.0, -0.5, 1.5];
        let mut tape = Tape::new();
        let (x, loss) = build(&mut tape, &x0);
        tape.backward(loss).unwrap();
        assert!(tape.grad(x).is_some());
        let build_plain = |tape: &mut Tape, xs: &[f64]| {
            let x = tape.param(2, 3, xs.to_vec());
            let b = tape.param(1, 3, vec![0.1, 0.2, 0.3]);
            let xb = tape.add_bias(x, b).unwrap();
            let t = tape.tile(xb, 2);
            let c = tape.concat_rows(t, x).unwrap();
            let gth = tape.gather(c, vec![0, 5, 5, 2]).unwrap();
            let r = tape.reshape(gth, 3, 4).unwrap();
            let l1 = tape.mse(r, vec![0.0; 12]).unwrap();
            let l2 = tape.mse(gth, vec![1.0; 12]).unwrap();
            let loss = tape.weighted_sum(vec![(l1, 1.0), (l2, 0.3)]).unwrap();
            (x, loss)
        };
        finite_difference_check(build_plain, x0);
    }
}
