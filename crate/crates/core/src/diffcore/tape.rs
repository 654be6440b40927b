use alloc::vec;
use alloc::vec::Vec;

use super::{DiffError, Tensor};

/// Epsilon added to the variance inside [`Tape::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
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
    MatMulUnordered(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Linear(Var, Var, Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Gather {
        x: Var,
        rows: Vec<usize>,
    },
    Mean(Var),
    Sum(Var),
    L2Normalize {
        x: Var,
        norms: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Wengert list for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it and
/// [`Tape::backward`] can walk the list in reverse. A tape can be differentiated
/// once; afterwards gradients stay readable but no new backward pass is allowed.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
    zero_norm_rows: usize,
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> DiffError {
    DiffError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// Sum that does not depend on the order of `vals`.
///
/// Terms are sorted under IEEE total order first, so any permutation of the same
/// multiset produces the same bits.
fn unordered_sum(vals: &mut [f64]) -> f64 {
    vals.sort_unstable_by(|a, b| a.total_cmp(b));
    vals.iter().sum()
}

fn matmul_kernel(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

// a: [m, k], returns a^T: [k, m]
fn transpose_kernel(a: &[f64], m: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        for j in 0..k {
            out[j * m + i] = a[i * k + j];
        }
    }
    out
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: &[f64]) {
    match slot {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => *slot = Some(delta.to_vec()),
    }
}

fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + libm::tanh(u))
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = libm::tanh(u);
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

    /// Number of all-zero rows seen by [`Tape::l2_normalize_lastdim`]. Those rows map to zero
    /// instead of NaN.
    pub fn zero_norm_rows(&self) -> usize {
        self.zero_norm_rows
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor, node_op: Op, inputs: &[Var]) -> Result<Var, DiffError> {
        if !value.is_finite() {
            return Err(DiffError::NonFiniteValue { op });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: node_op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize), DiffError> {
        let t = self.value(v);
        match t.shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(mismatch(op, s, &[0, 0])),
        }
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(mismatch("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let out = matmul_kernel(self.value(a).data(), m, k, self.value(b).data(), n);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    /// Matrix product whose forward value is independent of the order of the shared
    /// dimension: permuting the columns of `a` together with the rows of `b` yields
    /// bit-identical output.
    pub fn matmul_unordered(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(mismatch("matmul", self.value(a).shape(), self.value(b).shape()));
        }
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; m * n];
        let mut terms = vec![0.0; k];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    terms[p] = ad[i * k + p] * bd[p * n + j];
                }
                out[i * n + j] = unordered_sum(&mut terms);
            }
        }
        self.push(
            "matmul",
            Tensor::from_parts(vec![m, n], out),
            Op::MatMulUnordered(a, b),
            &[a, b],
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, DiffError> {
        let (m, k) = self.dims2("transpose", a)?;
        let out = transpose_kernel(self.value(a).data(), m, k);
        self.push("transpose", Tensor::from_parts(vec![k, m], out), Op::Transpose(a), &[a])
    }

    /// Elementwise sum. `b` may also be a vector of the last-dimension width, in which
    /// case it is broadcast over every row of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            let out: Vec<f64> = self
                .value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x + y)
                .collect();
            let shape = sa.to_vec();
            return self.push("add", Tensor::from_parts(shape, out), Op::Add(a, b), &[a, b]);
        }
        let cols = self.value(a).cols();
        if self.value(b).len() != cols {
            return Err(mismatch("add", sa, sb));
        }
        let bias = self.value(b).data();
        let out: Vec<f64> = self
            .value(a)
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(bias).map(|(x, y)| x + y))
            .collect();
        let shape = sa.to_vec();
        self.push("add", Tensor::from_parts(shape, out), Op::AddRow(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(mismatch("mul", sa, sb));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = sa.to_vec();
        self.push("mul", Tensor::from_parts(shape, out), Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, DiffError> {
        let t = self.value(a);
        let out: Vec<f64> = t.data().iter().map(|x| x * factor).collect();
        let shape = t.shape().to_vec();
        self.push("scale", Tensor::from_parts(shape, out), Op::Scale(a, factor), &[a])
    }

    /// Row-wise softmax. The normaliser is summed order-independently.
    pub fn softmax_lastdim(&mut self, a: Var) -> Result<Var, DiffError> {
        let t = self.value(a);
        let cols = t.cols();
        let mut out = Vec::with_capacity(t.len());
        let mut buf = vec![0.0; cols];
        for row in t.data().chunks(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (b, x) in buf.iter_mut().zip(row) {
                *b = libm::exp(x - max);
            }
            let exps_start = out.len();
            out.extend_from_slice(&buf);
            let z = unordered_sum(&mut buf);
            for v in &mut out[exps_start..] {
                *v /= z;
            }
        }
        let shape = t.shape().to_vec();
        self.push("softmax_lastdim", Tensor::from_parts(shape, out), Op::Softmax(a), &[a])
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` of the row width.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, DiffError> {
        let t = self.value(x);
        let cols = t.cols();
        if self.value(gamma).len() != cols || self.value(beta).len() != cols {
            return Err(mismatch("layer_norm", t.shape(), self.value(gamma).shape()));
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let n = cols as f64;
        let mut xhat = Vec::with_capacity(t.len());
        let mut inv_std = Vec::with_capacity(t.rows());
        let mut out = Vec::with_capacity(t.len());
        for row in t.data().chunks(cols) {
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            inv_std.push(inv);
            for (c, v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                out.push(h * g[c] + b[c]);
            }
        }
        let shape = t.shape().to_vec();
        self.push(
            "layer_norm",
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var, DiffError> {
        let t = self.value(a);
        let out: Vec<f64> = t.data().iter().map(|&x| gelu(x)).collect();
        let shape = t.shape().to_vec();
        self.push("gelu", Tensor::from_parts(shape, out), Op::Gelu(a), &[a])
    }

    /// `x [m, in] . w [in, out] + b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let (m, k) = self.dims2("linear", x)?;
        let (k2, n) = self.dims2("linear", w)?;
        if k != k2 || self.value(b).len() != n {
            return Err(mismatch("linear", self.value(x).shape(), self.value(w).shape()));
        }
        let mut out = matmul_kernel(self.value(x).data(), m, k, self.value(w).data(), n);
        let bias = self.value(b).data();
        for row in out.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        self.push(
            "linear",
            Tensor::from_parts(vec![m, n], out),
            Op::Linear(x, w, b),
            &[x, w, b],
        )
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, DiffError> {
        if inputs.is_empty() || axis > 1 {
            return Err(mismatch("concat", &[inputs.len()], &[axis]));
        }
        let (r0, c0) = self.dims2("concat", inputs[0])?;
        let mut total = 0;
        for &v in inputs {
            let (r, c) = self.dims2("concat", v)?;
            if (axis == 0 && c != c0) || (axis == 1 && r != r0) {
                return Err(mismatch("concat", &[r0, c0], &[r, c]));
            }
            total += if axis == 0 { r } else { c };
        }
        let (rows, cols) = if axis == 0 { (total, c0) } else { (r0, total) };
        let mut out = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &v in inputs {
                out.extend_from_slice(self.value(v).data());
            }
        } else {
            for r in 0..rows {
                for &v in inputs {
                    out.extend_from_slice(self.value(v).row_slice(r));
                }
            }
        }
        self.push(
            "concat",
            Tensor::from_parts(vec![rows, cols], out),
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        )
    }

    /// Contiguous range `[start, start + len)` of a rank-2 tensor along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, DiffError> {
        let (r, c) = self.dims2("slice", x)?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start + len > extent || len == 0 {
            return Err(mismatch("slice", &[r, c], &[axis, start, len]));
        }
        let t = self.value(x);
        let (shape, out) = if axis == 0 {
            (vec![len, c], t.data()[start * c..(start + len) * c].to_vec())
        } else {
            let mut out = Vec::with_capacity(r * len);
            for row in 0..r {
                out.extend_from_slice(&t.row_slice(row)[start..start + len]);
            }
            (vec![r, len], out)
        };
        self.push(
            "slice",
            Tensor::from_parts(shape, out),
            Op::Slice { x, axis, start },
            &[x],
        )
    }

    /// Selects rows of a rank-2 tensor in the given order (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, DiffError> {
        let (r, c) = self.dims2("gather_rows", x)?;
        if rows.is_empty() || rows.iter().any(|&i| i >= r) {
            return Err(mismatch("gather_rows", &[r, c], rows));
        }
        let t = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            out.extend_from_slice(t.row_slice(i));
        }
        self.push(
            "gather_rows",
            Tensor::from_parts(vec![rows.len(), c], out),
            Op::Gather { x, rows: rows.to_vec() },
            &[x],
        )
    }

    /// Mean of all elements, as a `[1]` scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var, DiffError> {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// Sum of all elements, as a `[1]` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Scales every row to unit L2 norm. All-zero rows stay zero and bump
    /// [`Tape::zero_norm_rows`].
    pub fn l2_normalize_lastdim(&mut self, a: Var) -> Result<Var, DiffError> {
        let t = self.value(a);
        let cols = t.cols();
        let mut norms = Vec::with_capacity(t.rows());
        let mut out = Vec::with_capacity(t.len());
        let mut zero_rows = 0;
        for row in t.data().chunks(cols) {
            let n = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            norms.push(n);
            if n == 0.0 {
                zero_rows += 1;
                out.extend(core::iter::repeat_n(0.0, cols));
            } else {
                out.extend(row.iter().map(|v| v / n));
            }
        }
        let shape = t.shape().to_vec();
        self.zero_norm_rows += zero_rows;
        self.push(
            "l2_normalize_lastdim",
            Tensor::from_parts(shape, out),
            Op::L2Normalize { x: a, norms },
            &[a],
        )
    }

    /// Mean over rows of `-log softmax(logits[i])[targets[i]]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, DiffError> {
        let (m, n) = self.dims2("cross_entropy", logits)?;
        if targets.len() != m || m == 0 || targets.iter().any(|&t| t >= n) {
            return Err(mismatch("cross_entropy", &[m, n], &[targets.len()]));
        }
        let t = self.value(logits);
        let mut probs = Vec::with_capacity(m * n);
        let mut loss = 0.0;
        for (row, &target) in t.data().chunks(n).zip(targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut exps: Vec<f64> = row.iter().map(|x| libm::exp(x - max)).collect();
            let z: f64 = exps.iter().sum();
            loss += libm::log(z) - (row[target] - max);
            for e in &mut exps {
                *e /= z;
            }
            probs.extend(exps);
        }
        self.push(
            "cross_entropy",
            Tensor::scalar(loss / m as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Reverse pass from a scalar `loss`. Afterwards [`Tape::grad`] answers for every
    /// node; the tape cannot be differentiated again.
    pub fn backward(&mut self, loss: Var) -> Result<(), DiffError> {
        if self.consumed {
            return Err(DiffError::TapeConsumed);
        }
        let shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(DiffError::NonScalarLoss { shape: shape.to_vec() });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let rg = |v: &Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) | Op::MatMulUnordered(a, b) => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[1];
                if rg(a) {
                    let bt = transpose_kernel(self.value(*b).data(), k, n);
                    let da = matmul_kernel(dy, m, n, &bt, k);
                    accumulate(&mut grads[a.0], &da);
                }
                if rg(b) {
                    let at = transpose_kernel(self.value(*a).data(), m, k);
                    let db = matmul_kernel(&at, k, m, dy, n);
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                let da = transpose_kernel(dy, s[0], s[1]);
                accumulate(&mut grads[a.0], &da);
            }
            Op::Add(a, b) => {
                if rg(a) {
                    accumulate(&mut grads[a.0], dy);
                }
                if rg(b) {
                    accumulate(&mut grads[b.0], dy);
                }
            }
            Op::AddRow(a, b) => {
                if rg(a) {
                    accumulate(&mut grads[a.0], dy);
                }
                if rg(b) {
                    let cols = self.value(*b).len();
                    let mut db = vec![0.0; cols];
                    for row in dy.chunks(cols) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::Mul(a, b) => {
                if rg(a) {
                    let da: Vec<f64> = dy.iter().zip(self.value(*b).data()).map(|(g, y)| g * y).collect();
                    accumulate(&mut grads[a.0], &da);
                }
                if rg(b) {
                    let db: Vec<f64> = dy.iter().zip(self.value(*a).data()).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::Scale(a, f) => {
                let da: Vec<f64> = dy.iter().map(|g| g * f).collect();
                accumulate(&mut grads[a.0], &da);
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let cols = node.value.cols();
                let mut da = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks(cols).zip(dy.chunks(cols)).zip(da.chunks_mut(cols)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, g)| p * g).sum();
                    for ((d, p), g) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = p * (g - dot);
                    }
                }
                accumulate(&mut grads[a.0], &da);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let cols = node.value.cols();
                let g = self.value(*gamma).data();
                if rg(gamma) || rg(beta) {
                    let mut dg = vec![0.0; cols];
                    let mut db = vec![0.0; cols];
                    for (gr, hr) in dy.chunks(cols).zip(xhat.chunks(cols)) {
                        for c in 0..cols {
                            dg[c] += gr[c] * hr[c];
                            db[c] += gr[c];
                        }
                    }
                    if rg(gamma) {
                        accumulate(&mut grads[gamma.0], &dg);
                    }
                    if rg(beta) {
                        accumulate(&mut grads[beta.0], &db);
                    }
                }
                if rg(x) {
                    let n = cols as f64;
                    let mut dx = vec![0.0; dy.len()];
                    for (r, ((gr, hr), dr)) in dy
                        .chunks(cols)
                        .zip(xhat.chunks(cols))
                        .zip(dx.chunks_mut(cols))
                        .enumerate()
                    {
                        let dh: Vec<f64> = gr.iter().zip(g).map(|(a, b)| a * b).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            dr[c] = inv_std[r] / n * (n * dh[c] - sum_dh - hr[c] * sum_dh_h);
                        }
                    }
                    accumulate(&mut grads[x.0], &dx);
                }
            }
            Op::Gelu(a) => {
                let da: Vec<f64> = dy
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, &x)| g * gelu_grad(x))
                    .collect();
                accumulate(&mut grads[a.0], &da);
            }
            Op::Linear(x, w, b) => {
                let (m, k) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let n = self.value(*w).shape()[1];
                if rg(x) {
                    let wt = transpose_kernel(self.value(*w).data(), k, n);
                    let dx = matmul_kernel(dy, m, n, &wt, k);
                    accumulate(&mut grads[x.0], &dx);
                }
                if rg(w) {
                    let xt = transpose_kernel(self.value(*x).data(), m, k);
                    let dw = matmul_kernel(&xt, k, m, dy, n);
                    accumulate(&mut grads[w.0], &dw);
                }
                if rg(b) {
                    let mut db = vec![0.0; n];
                    for row in dy.chunks(n) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    accumulate(&mut grads[b.0], &db);
                }
            }
            Op::Concat { inputs, axis } => {
                let cols = node.value.cols();
                if *axis == 0 {
                    let mut offset = 0;
                    for v in inputs {
                        let len = self.value(*v).len();
                        if rg(v) {
                            accumulate(&mut grads[v.0], &dy[offset..offset + len]);
                        }
                        offset += len;
                    }
                } else {
                    let rows = node.value.rows();
                    let mut offset = 0;
                    for v in inputs {
                        let w = self.value(*v).cols();
                        if rg(v) {
                            let mut dv = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                dv.extend_from_slice(&dy[r * cols + offset..r * cols + offset + w]);
                            }
                            accumulate(&mut grads[v.0], &dv);
                        }
                        offset += w;
                    }
                }
            }
            Op::Slice { x, axis, start } => {
                let src = self.value(*x);
                let (r, c) = (src.shape()[0], src.shape()[1]);
                let mut dx = vec![0.0; r * c];
                if *axis == 0 {
                    dx[start * c..start * c + dy.len()].copy_from_slice(dy);
                } else {
                    let w = node.value.cols();
                    for row in 0..r {
                        dx[row * c + start..row * c + start + w].copy_from_slice(&dy[row * w..(row + 1) * w]);
                    }
                }
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Gather { x, rows } => {
                let src = self.value(*x);
                let c = src.cols();
                let mut dx = vec![0.0; src.len()];
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        dx[r * c + j] += dy[k * c + j];
                    }
                }
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let da = vec![dy[0] / n as f64; n];
                accumulate(&mut grads[a.0], &da);
            }
            Op::Sum(a) => {
                let da = vec![dy[0]; self.value(*a).len()];
                accumulate(&mut grads[a.0], &da);
            }
            Op::L2Normalize { x, norms } => {
                let y = node.value.data();
                let cols = node.value.cols();
                let mut dx = vec![0.0; y.len()];
                for (r, ((yr, gr), dr)) in y.chunks(cols).zip(dy.chunks(cols)).zip(dx.chunks_mut(cols)).enumerate() {
                    if norms[r] == 0.0 {
                        continue;
                    }
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        dr[c] = (gr[c] - yr[c] * dot) / norms[r];
                    }
                }
                accumulate(&mut grads[x.0], &dx);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let n = self.value(*logits).cols();
                let m = targets.len() as f64;
                let mut dl: Vec<f64> = probs.iter().map(|p| p * dy[0] / m).collect();
                for (i, &t) in targets.iter().enumerate() {
                    dl[i * n + t] -= dy[0] / m;
                }
                accumulate(&mut grads[logits.0], &dl);
            }
        }
    }

    /// Gradient of the last backward pass with respect to `v`. Nodes that do not
    /// lie on a path to the loss get an exact zero tensor.
    pub fn grad(&self, v: Var) -> Tensor {
        let shape = self.value(v).shape().to_vec();
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}
