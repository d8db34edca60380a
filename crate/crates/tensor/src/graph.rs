//! Tape-based reverse-mode autodiff.
//!
//! Every op appends a node whose inputs precede it, so node order is a
//! topological order and [`Graph::backward`] is a single reverse sweep.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::kernels::gemm;
use crate::tensor::{dims2, ParamStore, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MatMulKind {
    /// `a · b`
    Nn,
    /// `a · bᵀ`
    Nt,
    /// `aᵀ · b`
    Tn,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var, MatMulKind),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    DivCol { a: Var, b: Var, eps: f64 },
    Scale(Var, f64),
    Exp(Var),
    EluPlusOne(Var),
    Gelu(Var),
    Relu(Var),
    Tanh(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    SumAxis { a: Var, axis: usize, scale: f64 },
    SumAll(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows { a: Var, start: usize },
    SliceCols { a: Var, start: usize },
    Transpose(Var),
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<bool>, probs: Vec<f64>, count: usize },
    Dropout { a: Var, mask: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation. Build one per forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    bindings: Vec<(String, Var)>,
    bound: HashMap<String, Var>,
    training: bool,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch { op, left: a.to_vec(), right: b.to_vec() }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph whose dropout nodes are active.
    pub fn training() -> Self {
        Graph { training: true, ..Self::default() }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn var_needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        dims2(self.shape(v))
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    /// Gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn bindings(&self) -> &[(String, Var)] {
        &self.bindings
    }

    /// Leaf copied from `t`; tracks gradients iff `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad)
    }

    pub fn input(&mut self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(t.shape().to_vec(), t.into_data(), Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        self.input(shape, data, false)
    }

    /// Binds a named parameter once per graph; later calls return the same
    /// leaf so repeated uses accumulate into one gradient.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let v = self.leaf(store.get(name)?);
        self.bound.insert(name.to_string(), v);
        self.bindings.push((name.to_string(), v));
        Ok(v)
    }

    fn matmul_kind(&mut self, a: Var, b: Var, kind: MatMulKind, op: &'static str) -> Result<Var> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        let (m, k, k2, n) = match kind {
            MatMulKind::Nn => (ar, ac, br, bc),
            MatMulKind::Nt => (ar, ac, bc, br),
            MatMulKind::Tn => (ac, ar, br, bc),
        };
        if k != k2 {
            return Err(mismatch(op, self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), kind == MatMulKind::Tn, self.value(b), kind == MatMulKind::Nt, &mut out, false);
        let needs = self.var_needs(a) || self.var_needs(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b, kind), needs))
    }

    /// `a · b` for `a: m×k`, `b: k×n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_kind(a, b, MatMulKind::Nn, "matmul")
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_kind(a, b, MatMulKind::Nt, "matmul_nt")
    }

    /// `aᵀ · b` for `a: k×m`, `b: k×n`.
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_kind(a, b, MatMulKind::Tn, "matmul_tn")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("add", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let needs = self.var_needs(a) || self.var_needs(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), needs))
    }

    /// Broadcasts a row vector `b` (length `n`) over every row of `a: m×n`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, n) = self.dims(a);
        let (br, bc) = self.dims(b);
        if br != 1 || bc != n {
            return Err(mismatch("add_row", self.shape(a), self.shape(b)));
        }
        let bv = self.value(b);
        let mut out = self.value(a).to_vec();
        if n > 0 {
            for row in out.chunks_mut(n) {
                add_into(row, bv);
            }
        }
        let needs = self.var_needs(a) || self.var_needs(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::AddRow(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("mul", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let needs = self.var_needs(a) || self.var_needs(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), needs))
    }

    /// Row-wise `a[i, :] / max(b[i], eps)` for `a: m×n`, `b: m×1`.
    pub fn div_col(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.dims(b) != (m, 1) {
            return Err(mismatch("div_col", self.shape(a), self.shape(b)));
        }
        let bv = self.value(b);
        let mut out = self.value(a).to_vec();
        for i in 0..m {
            let d = bv[i].max(eps);
            out[i * n..(i + 1) * n].iter_mut().for_each(|x| *x /= d);
        }
        let needs = self.var_needs(a) || self.var_needs(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::DivCol { a, b, eps }, needs))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * s).collect();
        let needs = self.var_needs(a);
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, s), needs)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let needs = self.var_needs(a);
        self.push(self.shape(a).to_vec(), out, op, needs)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// `elu(x) + 1`: positive feature map for kernelized attention.
    pub fn elu_plus_one(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x + 1.0 } else { x.exp() }, Op::EluPlusOne(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, gelu, Op::Gelu(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (_, n) = self.dims(a);
        let mut out = self.value(a).to_vec();
        if n > 0 {
            for row in out.chunks_mut(n) {
                softmax_in_place(row);
            }
        }
        let needs = self.var_needs(a);
        self.push(self.shape(a).to_vec(), out, Op::Softmax(a), needs)
    }

    /// Per-row layer normalization with affine `gamma`, `beta` (length `n`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (m, n) = self.dims(x);
        if self.dims(gamma) != (1, n) || self.dims(beta) != (1, n) {
            return Err(mismatch("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let xv = self.value(x);
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let needs = self.var_needs(x) || self.var_needs(gamma) || self.var_needs(beta);
        let op = Op::LayerNorm { x, gamma, beta, xhat, rstd };
        Ok(self.push(self.shape(x).to_vec(), out, op, needs))
    }

    fn sum_axis_scaled(&mut self, a: Var, axis: usize, scale: f64) -> Result<Var> {
        let (m, n) = self.dims(a);
        let xv = self.value(a);
        let (shape, out) = match axis {
            0 => {
                let mut out = vec![0.0; n];
                for i in 0..m {
                    add_into(&mut out, &xv[i * n..(i + 1) * n]);
                }
                (vec![1, n], out)
            }
            1 => (vec![m, 1], (0..m).map(|i| xv[i * n..(i + 1) * n].iter().sum()).collect()),
            _ => {
                return Err(TensorError::InvalidArgument {
                    op: "sum_axis",
                    detail: format!("axis {axis} out of range for rank-2 view"),
                })
            }
        };
        let out: Vec<f64> = out.into_iter().map(|v: f64| v * scale).collect();
        let needs = self.var_needs(a);
        Ok(self.push(shape, out, Op::SumAxis { a, axis, scale }, needs))
    }

    /// Sum over `axis` of the `m×n` view, keeping the reduced axis as 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.sum_axis_scaled(a, axis, 1.0)
    }

    /// Mean over `axis` of the `m×n` view, keeping the reduced axis as 1.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        let len = if axis == 0 { m } else { n };
        let scale = if len == 0 { 0.0 } else { 1.0 / len as f64 };
        self.sum_axis_scaled(a, axis, scale)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let needs = self.var_needs(a);
        self.push(vec![1], vec![s], Op::SumAll(a), needs)
    }

    /// Concatenate `m_i×n` blocks along the row (sequence) axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::InvalidArgument { op: "concat_rows", detail: "no inputs".into() });
        };
        let (_, n) = self.dims(first);
        let mut rows = 0;
        let mut out = Vec::new();
        let mut needs = false;
        for &p in parts {
            let (r, c) = self.dims(p);
            if c != n {
                return Err(mismatch("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p));
            needs |= self.var_needs(p);
        }
        Ok(self.push(vec![rows, n], out, Op::ConcatRows(parts.to_vec()), needs))
    }

    /// Concatenate `m×n_i` blocks along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::InvalidArgument { op: "concat_cols", detail: "no inputs".into() });
        };
        let (m, _) = self.dims(first);
        let mut widths = Vec::with_capacity(parts.len());
        let mut needs = false;
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != m {
                return Err(mismatch("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
            needs |= self.var_needs(p);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = self.value(p);
            for i in 0..m {
                out[i * total + off..i * total + off + w].copy_from_slice(&v[i * w..(i + 1) * w]);
            }
            off += w;
        }
        Ok(self.push(vec![m, total], out, Op::ConcatCols(parts.to_vec()), needs))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + len > m {
            return Err(TensorError::InvalidArgument {
                op: "slice_rows",
                detail: format!("rows {start}..{} out of {m}", start + len),
            });
        }
        let out = self.value(a)[start * n..(start + len) * n].to_vec();
        let needs = self.var_needs(a);
        Ok(self.push(vec![len, n], out, Op::SliceRows { a, start }, needs))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + len > n {
            return Err(TensorError::InvalidArgument {
                op: "slice_cols",
                detail: format!("cols {start}..{} out of {n}", start + len),
            });
        }
        let v = self.value(a);
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&v[i * n + start..i * n + start + len]);
        }
        let needs = self.var_needs(a);
        Ok(self.push(vec![m, len], out, Op::SliceCols { a, start }, needs))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let v = self.value(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        let needs = self.var_needs(a);
        self.push(vec![n, m], out, Op::Transpose(a), needs)
    }

    /// Gathers rows of `table: V×D`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(TensorError::InvalidArgument {
                op: "embedding",
                detail: format!("index {bad} out of vocabulary of {v}"),
            });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let needs = self.var_needs(table);
        let op = Op::Embedding { table, ids: ids.to_vec() };
        Ok(self.push(vec![ids.len(), d], out, op, needs))
    }

    /// Mean softmax cross-entropy over the rows where `mask` is true.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (t, v) = self.dims(logits);
        if targets.len() != t || mask.len() != t {
            return Err(mismatch("cross_entropy", self.shape(logits), &[targets.len()]));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(TensorError::EmptyMask);
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; t * v];
        let mut total = 0.0;
        for i in 0..t {
            if !mask[i] {
                continue;
            }
            if targets[i] >= v {
                return Err(TensorError::InvalidArgument {
                    op: "cross_entropy",
                    detail: format!("target {} out of {v} classes", targets[i]),
                });
            }
            let row = &lv[i * v..(i + 1) * v];
            let p = &mut probs[i * v..(i + 1) * v];
            p.copy_from_slice(row);
            let lse = log_softmax_shift(p);
            total += lse - row[targets[i]];
            p.iter_mut().for_each(|x| *x = (*x - lse).exp());
        }
        let needs = self.var_needs(logits);
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec(), probs, count };
        Ok(self.push(vec![1], vec![total / count as f64], op, needs))
    }

    /// Inverted dropout; identity outside training graphs or when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if !self.training || p <= 0.0 {
            return a;
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> =
            (0..self.value(a).len()).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let needs = self.var_needs(a);
        self.push(self.shape(a).to_vec(), out, Op::Dropout { a, mask }, needs)
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients are readable via
    /// [`Graph::grad`] afterwards; interior gradients are released.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let len = nodes[v.0].value.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b, kind) => {
                let (ar, ac) = dims2(&nodes[a.0].shape);
                let (br, bc) = dims2(&nodes[b.0].shape);
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                match kind {
                    MatMulKind::Nn => {
                        // c = a b: da = g bᵀ, db = aᵀ g
                        acc(*a, &mut |da| gemm(ar, bc, ac, g, false, bv, true, da, true));
                        acc(*b, &mut |db| gemm(ac, ar, bc, av, true, g, false, db, true));
                    }
                    MatMulKind::Nt => {
                        // c = a bᵀ (m×n): da = g b, db = gᵀ a
                        acc(*a, &mut |da| gemm(ar, br, bc, g, false, bv, false, da, true));
                        acc(*b, &mut |db| gemm(br, ar, ac, g, true, av, false, db, true));
                    }
                    MatMulKind::Tn => {
                        // c = aᵀ b (m×n), a: k×m: da = b gᵀ, db = a g
                        acc(*a, &mut |da| gemm(ar, bc, ac, bv, false, g, true, da, true));
                        acc(*b, &mut |db| gemm(br, ac, bc, av, false, g, false, db, true));
                    }
                }
            }
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::AddRow(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                let n = nodes[b.0].value.len();
                acc(*b, &mut |d| {
                    if n > 0 {
                        for row in g.chunks(n) {
                            add_into(d, row);
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * bv[k];
                    }
                });
                acc(*b, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * av[k];
                    }
                });
            }
            Op::DivCol { a, b, eps } => {
                let (m, n) = dims2(&nodes[a.0].shape);
                let bv = &nodes[b.0].value;
                let out = &node.value;
                acc(*a, &mut |d| {
                    for r in 0..m {
                        let den = bv[r].max(*eps);
                        for c in 0..n {
                            d[r * n + c] += g[r * n + c] / den;
                        }
                    }
                });
                acc(*b, &mut |d| {
                    for r in 0..m {
                        if bv[r] < *eps {
                            continue;
                        }
                        let den = bv[r];
                        let s: f64 = (0..n).map(|c| g[r * n + c] * out[r * n + c]).sum();
                        d[r] -= s / den;
                    }
                });
            }
            Op::Scale(a, s) => acc(*a, &mut |d| {
                for k in 0..d.len() {
                    d[k] += g[k] * s;
                }
            }),
            Op::Exp(a) => {
                let out = &node.value;
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * out[k];
                    }
                });
            }
            Op::EluPlusOne(a) => {
                let x = &nodes[a.0].value;
                let out = &node.value;
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * if x[k] > 0.0 { 1.0 } else { out[k] };
                    }
                });
            }
            Op::Gelu(a) => {
                let x = &nodes[a.0].value;
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * gelu_grad(x[k]);
                    }
                });
            }
            Op::Relu(a) => {
                let x = &nodes[a.0].value;
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        if x[k] > 0.0 {
                            d[k] += g[k];
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let out = &node.value;
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * (1.0 - out[k] * out[k]);
                    }
                });
            }
            Op::Softmax(a) => {
                let (_, n) = dims2(&node.shape);
                let y = &node.value;
                acc(*a, &mut |d| {
                    if n == 0 {
                        return;
                    }
                    for ((dr, yr), gr) in d.chunks_mut(n).zip(y.chunks(n)).zip(g.chunks(n)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for k in 0..n {
                            dr[k] += yr[k] * (gr[k] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let (m, n) = dims2(&nodes[x.0].shape);
                let gv = &nodes[gamma.0].value;
                acc(*beta, &mut |d| {
                    for r in 0..m {
                        add_into(d, &g[r * n..(r + 1) * n]);
                    }
                });
                acc(*gamma, &mut |d| {
                    for r in 0..m {
                        for c in 0..n {
                            d[c] += g[r * n + c] * xhat[r * n + c];
                        }
                    }
                });
                acc(*x, &mut |d| {
                    let nf = n as f64;
                    for r in 0..m {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for c in 0..n {
                            let dh = g[r * n + c] * gv[c];
                            s1 += dh;
                            s2 += dh * xhat[r * n + c];
                        }
                        for c in 0..n {
                            let dh = g[r * n + c] * gv[c];
                            d[r * n + c] += rstd[r] / nf * (nf * dh - s1 - xhat[r * n + c] * s2);
                        }
                    }
                });
            }
            Op::SumAxis { a, axis, scale } => {
                let (m, n) = dims2(&nodes[a.0].shape);
                acc(*a, &mut |d| {
                    for r in 0..m {
                        for c in 0..n {
                            let gi = if *axis == 0 { g[c] } else { g[r] };
                            d[r * n + c] += gi * scale;
                        }
                    }
                });
            }
            Op::SumAll(a) => acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += g[0])),
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    acc(*p, &mut |d| add_into(d, &g[off..off + len]));
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, total) = dims2(&node.shape);
                let mut off = 0;
                for p in parts {
                    let (_, w) = dims2(&nodes[p.0].shape);
                    acc(*p, &mut |d| {
                        for r in 0..m {
                            add_into(&mut d[r * w..(r + 1) * w], &g[r * total + off..r * total + off + w]);
                        }
                    });
                    off += w;
                }
            }
            Op::SliceRows { a, start } => {
                let (_, n) = dims2(&node.shape);
                acc(*a, &mut |d| add_into(&mut d[start * n..start * n + g.len()], g));
            }
            Op::SliceCols { a, start } => {
                let (m, len) = dims2(&node.shape);
                let (_, n) = dims2(&nodes[a.0].shape);
                acc(*a, &mut |d| {
                    for r in 0..m {
                        add_into(&mut d[r * n + start..r * n + start + len], &g[r * len..(r + 1) * len]);
                    }
                });
            }
            Op::Transpose(a) => {
                let (m, n) = dims2(&nodes[a.0].shape);
                acc(*a, &mut |d| {
                    for r in 0..m {
                        for c in 0..n {
                            d[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let (_, dim) = dims2(&nodes[table.0].shape);
                acc(*table, &mut |d| {
                    for (row, &id) in ids.iter().enumerate() {
                        add_into(&mut d[id * dim..(id + 1) * dim], &g[row * dim..(row + 1) * dim]);
                    }
                });
            }
            Op::CrossEntropy { logits, targets, mask, probs, count } => {
                let (t, v) = dims2(&nodes[logits.0].shape);
                let s = g[0] / *count as f64;
                acc(*logits, &mut |d| {
                    for r in 0..t {
                        if !mask[r] {
                            continue;
                        }
                        for c in 0..v {
                            d[r * v + c] += s * probs[r * v + c];
                        }
                        d[r * v + targets[r]] -= s;
                    }
                });
            }
            Op::Dropout { a, mask } => acc(*a, &mut |d| {
                for k in 0..d.len() {
                    d[k] += g[k] * mask[k];
                }
            }),
        }
    }
}

/// Stable in-place softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    row.iter_mut().for_each(|x| *x /= sum);
}

/// Returns `logsumexp(row)`; leaves `row` untouched in value.
fn log_softmax_shift(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let eye = g.constant(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let a: Vec<f64> = (1..=9).map(|x| x as f64 * 0.5 - 2.0).collect();
        let av = g.constant(&[3, 3], a.clone()).unwrap();
        let c = g.matmul(eye, av).unwrap();
        assert_eq!(g.value(c), &a[..]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(&[1, 3], vec![0.0; 3]).unwrap();
        let y = g.softmax(x);
        close(g.value(y), &[1.0 / 3.0; 3], 1e-15);
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(&[1, 4], vec![7.5; 4]).unwrap();
        let gamma = g.constant(&[4], vec![1.0; 4]).unwrap();
        let beta = g.constant(&[4], vec![0.0; 4]).unwrap();
        let y = g.layer_norm(x, gamma, beta).unwrap();
        assert!(g.value(y).iter().all(|v| v.abs() <= 1e-3));
    }

    #[test]
    fn square_sum_gradient() {
        let mut g = Graph::new();
        let x = g.input(&[2], vec![1.0, 2.0], true).unwrap();
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn cross_entropy_half_probability_gradient() {
        let mut g = Graph::new();
        let logits = g.input(&[1, 2], vec![0.0, 0.0], true).unwrap();
        let loss = g.cross_entropy(logits, &[0], &[true]).unwrap();
        assert!((g.scalar(loss) - 2f64.ln()).abs() < 1e-15);
        g.backward(loss).unwrap();
        close(g.grad(logits).unwrap(), &[-0.5, 0.5], 1e-15);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.input(&[2], vec![1.0, 2.0], true).unwrap();
        let err = g.backward(x).unwrap_err();
        assert_eq!(err, TensorError::NonScalarLoss(vec![2]));
    }

    #[test]
    fn shape_error_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let b = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(err, TensorError::ShapeMismatch { op: "matmul", left: vec![2, 3], right: vec![2, 3] });
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mut g = Graph::new();
        let logits = g.input(&[2, 3], vec![0.0; 6], true).unwrap();
        assert_eq!(g.cross_entropy(logits, &[0, 1], &[false, false]).unwrap_err(), TensorError::EmptyMask);
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let mut g = Graph::new();
        let w = g.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = g.input(&[1, 2], vec![1.0, -1.0], true).unwrap();
        let y = g.matmul(x, w).unwrap();
        let l = g.sum(y);
        g.backward(l).unwrap();
        assert!(g.grad(w).is_none());
        assert_eq!(g.grad(x).unwrap(), &[3.0, 7.0]);
    }
}
