//! Define-by-run gradient tape.
//!
//! Every forward op appends one node; node ids increase monotonically so the
//! append order is already a topological order. `backward` walks it in
//! reverse and consumes the tape.

use std::collections::BTreeMap;

use super::params::{ParamGrads, ParamSet};
use super::{AdError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols { input: Var, start: usize },
    GatherRows { input: Var, rows: Vec<usize> },
    SegmentMean { input: Var, group: usize },
    Sum(Var),
    Mean(Var),
    SquaredError(Var, Var),
    BceLogits { logits: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Parameter name to leaf handle, produced by [`Tape::bind`].
#[derive(Debug, Default, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var, AdError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| AdError::Contract(format!("parameter `{name}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> AdError {
    AdError::Shape { op, detail }
}

fn dims(t: &Tensor, op: &'static str) -> Result<(usize, usize), AdError> {
    t.matrix_dims()
        .ok_or_else(|| shape_err(op, format!("expected rank <= 2, got {:?}", t.shape())))
}

/// `c (+)= a * b` for row-major operands addressed through explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    // SAFETY: the callers pass slices holding at least the addressed extents
    // (m x k for a, k x n for b, m x n for c) under the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var, AdError> {
        let id = self.nodes.len();
        if !value.is_finite() {
            return Err(AdError::NonFinite { op: op_name, node: id });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(id))
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(id)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(id)
    }

    /// Registers every parameter as a leaf; `trainable` decides which of them
    /// take part in differentiation.
    pub fn bind(&mut self, params: &ParamSet, trainable: impl Fn(&str) -> bool) -> Bound {
        let vars = params
            .iter()
            .map(|(name, t)| {
                let v = if trainable(name) { self.leaf(t.clone()) } else { self.constant(t.clone()) };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (m, k) = dims(self.value(a), "matmul")?;
        let (k2, n) = dims(self.value(b), "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), k as isize, 1, self.value(b).data(), n as isize, 1, &mut out, false);
        self.push("matmul", Tensor::matrix(m, n, out), Op::MatMul(a, b), &[a, b])
    }

    /// `a * b^T`, the layout linear layers use for `[out x in]` weights.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (m, k) = dims(self.value(a), "matmul_t")?;
        let (n, k2) = dims(self.value(b), "matmul_t")?;
        if k != k2 {
            return Err(shape_err("matmul_t", format!("[{m}x{k}] x [{n}x{k2}]^T")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), k as isize, 1, self.value(b).data(), 1, k as isize, &mut out, false);
        self.push("matmul_t", Tensor::matrix(m, n, out), Op::MatMulT(a, b), &[a, b])
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, AdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`n` row vector to every row of `[m x n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AdError> {
        let (m, n) = dims(self.value(a), "add_row")?;
        if self.value(row).len() != n {
            return Err(shape_err("add_row", format!("[{m}x{n}] + row of {}", self.value(row).len())));
        }
        let r = self.value(row).data();
        let data = self.value(a).data().chunks(n.max(1)).flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| x + y)).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push("add_row", value, Op::AddRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AdError> {
        let t = self.value(a);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x * c).collect())?;
        self.push("scale", value, Op::Scale(a, c), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x.tanh()).collect())?;
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| sigmoid(*x)).collect())?;
        self.push("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var, AdError> {
        self.masked_softmax(a, None)
    }

    /// Row-wise softmax over the entries whose mask bit is set; masked-out
    /// entries come out as exact zeros. Every row needs one open entry.
    pub fn masked_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, AdError> {
        let (m, n) = dims(self.value(a), "softmax")?;
        if let Some(mask) = mask {
            if mask.len() != m * n {
                return Err(shape_err("softmax", format!("mask of {} for [{m}x{n}]", mask.len())));
            }
        }
        let x = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let open = |c: usize| mask.is_none_or(|mk| mk[r * n + c]);
            let row = &x[r * n..(r + 1) * n];
            let max = (0..n).filter(|&c| open(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(shape_err("softmax", format!("row {r} fully masked")));
            }
            let mut total = 0.0;
            for c in 0..n {
                if open(c) {
                    let e = (row[c] - max).exp();
                    out[r * n + c] = e;
                    total += e;
                }
            }
            out[r * n..(r + 1) * n].iter_mut().for_each(|v| *v /= total);
        }
        let value = Tensor::new(self.value(a).shape().to_vec(), out)?;
        self.push("softmax", value, Op::Softmax(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        if parts.is_empty() {
            return Err(AdError::Contract("concat of nothing".into()));
        }
        let shapes: Vec<(usize, usize)> = parts.iter().map(|v| dims(self.value(*v), "concat")).collect::<Result<_, _>>()?;
        let rows = shapes[0].0;
        if shapes.iter().any(|(r, _)| *r != rows) {
            return Err(shape_err("concat", format!("row counts {shapes:?}")));
        }
        let width: usize = shapes.iter().map(|(_, c)| c).sum();
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for (v, (_, c)) in parts.iter().zip(&shapes) {
                out.extend_from_slice(&self.value(*v).data()[r * c..(r + 1) * c]);
            }
        }
        self.push("concat", Tensor::matrix(rows, width, out), Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AdError> {
        let (m, n) = dims(self.value(a), "slice")?;
        if start + len > n {
            return Err(shape_err("slice", format!("cols {start}..{} of {n}", start + len)));
        }
        let x = self.value(a).data();
        let out = (0..m).flat_map(|r| x[r * n + start..r * n + start + len].iter().copied()).collect();
        self.push("slice", Tensor::matrix(m, len, out), Op::SliceCols { input: a, start }, &[a])
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var, AdError> {
        let (m, n) = dims(self.value(a), "gather")?;
        if let Some(bad) = rows.iter().find(|&&r| r >= m) {
            return Err(shape_err("gather", format!("row {bad} of {m}")));
        }
        let x = self.value(a).data();
        let out = rows.iter().flat_map(|&r| x[r * n..(r + 1) * n].iter().copied()).collect();
        let op = Op::GatherRows { input: a, rows: rows.to_vec() };
        self.push("gather", Tensor::matrix(rows.len(), n, out), op, &[a])
    }

    /// Mean over consecutive blocks of `group` rows: `[g*k x n] -> [k x n]`.
    pub fn segment_mean(&mut self, a: Var, group: usize) -> Result<Var, AdError> {
        let (m, n) = dims(self.value(a), "segment_mean")?;
        if group == 0 || m % group != 0 {
            return Err(shape_err("segment_mean", format!("{m} rows in groups of {group}")));
        }
        let x = self.value(a).data();
        let k = m / group;
        let mut out = vec![0.0; k * n];
        for r in 0..m {
            let dst = &mut out[(r / group) * n..(r / group + 1) * n];
            dst.iter_mut().zip(&x[r * n..(r + 1) * n]).for_each(|(d, s)| *d += s);
        }
        out.iter_mut().for_each(|v| *v /= group as f64);
        self.push("segment_mean", Tensor::matrix(k, n, out), Op::SegmentMean { input: a, group }, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AdError> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(shape_err("mean", "empty input".into()));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// `sum((a - b)^2)` as a scalar.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("squared_error", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push("squared_error", Tensor::scalar(s), Op::SquaredError(a, b), &[a, b])
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// evaluated in the overflow-free softplus form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, AdError> {
        let t = self.value(logits);
        if t.len() != targets.len() || t.is_empty() {
            return Err(shape_err("bce", format!("{} logits vs {} targets", t.len(), targets.len())));
        }
        let s = t
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| y * softplus(-x) + (1.0 - y) * softplus(x))
            .sum::<f64>()
            / targets.len() as f64;
        let op = Op::BceLogits { logits, targets: targets.to_vec() };
        self.push("bce", Tensor::scalar(s), op, &[logits])
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, AdError> {
        let nodes = self.nodes;
        let root = nodes
            .get(loss.0)
            .ok_or_else(|| AdError::Contract(format!("loss node {} not on tape", loss.0)))?;
        if root.value.len() != 1 {
            return Err(AdError::Contract(format!("loss must be scalar, got shape {:?}", root.value.shape())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        if root.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |v: Var| &nodes[v.0].value;
            let wants = |v: Var| nodes[v.0].requires_grad;
            let mut acc = |v: Var, contribution: &dyn Fn(&mut [f64])| {
                if !wants(v) {
                    return;
                }
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
                contribution(slot);
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (m, k) = val(*a).matrix_dims().unwrap();
                    let (_, n) = val(*b).matrix_dims().unwrap();
                    // dA = G B^T, dB = A^T G
                    acc(*a, &|s| gemm(m, n, k, &g, n as isize, 1, val(*b).data(), 1, n as isize, s, true));
                    acc(*b, &|s| gemm(k, m, n, val(*a).data(), 1, k as isize, &g, n as isize, 1, s, true));
                }
                Op::MatMulT(a, b) => {
                    let (m, k) = val(*a).matrix_dims().unwrap();
                    let (n, _) = val(*b).matrix_dims().unwrap();
                    // C = A B^T: dA = G B, dB = G^T A
                    acc(*a, &|s| gemm(m, n, k, &g, n as isize, 1, val(*b).data(), k as isize, 1, s, true));
                    acc(*b, &|s| gemm(n, m, k, &g, 1, n as isize, val(*a).data(), k as isize, 1, s, true));
                }
                Op::Add(a, b) => {
                    acc(*a, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x));
                    acc(*b, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x));
                }
                Op::AddRow(a, row) => {
                    let n = val(*row).len();
                    acc(*a, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x));
                    acc(*row, &|s| {
                        for chunk in g.chunks(n.max(1)) {
                            s.iter_mut().zip(chunk).for_each(|(d, x)| *d += x);
                        }
                    });
                }
                Op::Sub(a, b) => {
                    acc(*a, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x));
                    acc(*b, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d -= x));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a).data(), val(*b).data());
                    acc(*a, &|s| s.iter_mut().zip(g.iter().zip(vb)).for_each(|(d, (x, y))| *d += x * y));
                    acc(*b, &|s| s.iter_mut().zip(g.iter().zip(va)).for_each(|(d, (x, y))| *d += x * y));
                }
                Op::Scale(a, c) => {
                    acc(*a, &|s| s.iter_mut().zip(&g).for_each(|(d, x)| *d += x * c));
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    acc(*a, &|s| s.iter_mut().zip(g.iter().zip(y)).for_each(|(d, (x, y))| *d += x * (1.0 - y * y)));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    acc(*a, &|s| s.iter_mut().zip(g.iter().zip(y)).for_each(|(d, (x, y))| *d += x * y * (1.0 - y)));
                }
                Op::Softmax(a) => {
                    let (m, n) = node.value.matrix_dims().unwrap();
                    let y = node.value.data();
                    acc(*a, &|s| {
                        for r in 0..m {
                            let span = r * n..(r + 1) * n;
                            let dot: f64 = g[span.clone()].iter().zip(&y[span.clone()]).map(|(x, y)| x * y).sum();
                            for i in span {
                                s[i] += y[i] * (g[i] - dot);
                            }
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let (rows, width) = node.value.matrix_dims().unwrap();
                    let mut offset = 0;
                    for p in parts {
                        let (_, c) = val(*p).matrix_dims().unwrap();
                        acc(*p, &|s| {
                            for r in 0..rows {
                                let src = &g[r * width + offset..r * width + offset + c];
                                s[r * c..(r + 1) * c].iter_mut().zip(src).for_each(|(d, x)| *d += x);
                            }
                        });
                        offset += c;
                    }
                }
                Op::SliceCols { input, start } => {
                    let (m, n) = val(*input).matrix_dims().unwrap();
                    let (_, len) = node.value.matrix_dims().unwrap();
                    acc(*input, &|s| {
                        for r in 0..m {
                            let dst = &mut s[r * n + start..r * n + start + len];
                            dst.iter_mut().zip(&g[r * len..(r + 1) * len]).for_each(|(d, x)| *d += x);
                        }
                    });
                }
                Op::GatherRows { input, rows } => {
                    let (_, n) = val(*input).matrix_dims().unwrap();
                    acc(*input, &|s| {
                        for (i, &r) in rows.iter().enumerate() {
                            let dst = &mut s[r * n..(r + 1) * n];
                            dst.iter_mut().zip(&g[i * n..(i + 1) * n]).for_each(|(d, x)| *d += x);
                        }
                    });
                }
                Op::SegmentMean { input, group } => {
                    let (m, n) = val(*input).matrix_dims().unwrap();
                    let w = 1.0 / *group as f64;
                    acc(*input, &|s| {
                        for r in 0..m {
                            let src = &g[(r / group) * n..(r / group + 1) * n];
                            s[r * n..(r + 1) * n].iter_mut().zip(src).for_each(|(d, x)| *d += x * w);
                        }
                    });
                }
                Op::Sum(a) => {
                    acc(*a, &|s| s.iter_mut().for_each(|d| *d += g[0]));
                }
                Op::Mean(a) => {
                    let w = g[0] / val(*a).len() as f64;
                    acc(*a, &|s| s.iter_mut().for_each(|d| *d += w));
                }
                Op::SquaredError(a, b) => {
                    let (va, vb) = (val(*a).data(), val(*b).data());
                    acc(*a, &|s| s.iter_mut().zip(va.iter().zip(vb)).for_each(|(d, (x, y))| *d += 2.0 * g[0] * (x - y)));
                    acc(*b, &|s| s.iter_mut().zip(va.iter().zip(vb)).for_each(|(d, (x, y))| *d -= 2.0 * g[0] * (x - y)));
                }
                Op::BceLogits { logits, targets } => {
                    let w = g[0] / targets.len() as f64;
                    let x = val(*logits).data();
                    acc(*logits, &|s| {
                        for i in 0..s.len() {
                            s[i] += w * (sigmoid(x[i]) - targets[i]);
                        }
                    });
                }
            }
        }

        let mut leaf_grads = BTreeMap::new();
        for (id, (node, g)) in nodes.into_iter().zip(grads).enumerate() {
            if let (Op::Leaf, true, Some(g)) = (&node.op, node.requires_grad, g) {
                leaf_grads.insert(id, Tensor::new(node.value.shape().to_vec(), g)?);
            }
        }
        Ok(Gradients { grads: leaf_grads })
    }
}

/// Gradients of the trainable leaves reachable from a loss.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v.0)
    }

    /// Collects gradients by parameter name. Unreachable parameters are absent.
    pub fn into_params(mut self, bound: &Bound) -> ParamGrads {
        let mut out = ParamGrads::default();
        for (name, var) in bound.iter() {
            if let Some(g) = self.grads.remove(&var.0) {
                out.insert(name.clone(), g);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_by_identity() {
        let mut tape = Tape::new();
        let i = tape.constant(t2(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let x = tape.constant(t2(&[&[3.0], &[4.0]]));
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);
        assert_eq!(tape.value(y).shape(), &[2, 1]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0; 3]));
        let y = tape.softmax(x).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_midpoint() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(0.0));
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(y).item(), Some(0.5));
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), Some(6.0));
    }

    #[test]
    fn constant_loss_is_a_noop() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(2.0));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!(grads.get(x).is_none());
        assert!(grads.grads.is_empty());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(AdError::Contract(_))));
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(AdError::Shape { op: "matmul", .. })));
        let c = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(tape.add(a, c), Err(AdError::Shape { op: "add", .. })));
    }

    #[test]
    fn non_finite_output_names_the_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1e200));
        let err = tape.mul(a, a).unwrap_err();
        assert!(matches!(err, AdError::NonFinite { op: "mul", node: 1 }));
    }

    #[test]
    fn masked_softmax_zeroes_closed_entries() {
        let mut tape = Tape::new();
        let x = tape.leaf(t2(&[&[1.0, 2.0, 3.0], &[0.5, 0.5, 9.0]]));
        let mask = [true, false, true, true, true, false];
        let y = tape.masked_softmax(x, Some(&mask)).unwrap();
        let v = tape.value(y).clone();
        assert_eq!(v.get2(0, 1), 0.0);
        assert_eq!(v.get2(1, 2), 0.0);
        assert!((v.get2(1, 0) - 0.5).abs() < 1e-15);
        let fully_closed = [false; 6];
        assert!(tape.masked_softmax(x, Some(&fully_closed)).is_err());
    }

    #[test]
    fn bce_matches_log_form() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.3, -1.2]));
        let loss = tape.bce_with_logits(x, &[1.0, 0.0]).unwrap();
        let p0 = sigmoid(0.3);
        let p1 = sigmoid(-1.2);
        let expected = (-(p0.ln()) - (1.0 - p1).ln()) / 2.0;
        assert!((tape.value(loss).item().unwrap() - expected).abs() < 1e-14);
    }
}
