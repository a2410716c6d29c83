//! Wengert-list reverse-mode differentiation.
//!
//! Every forward op appends a node to the tape and returns a [`Var`] handle.
//! Because nodes are only ever appended, inputs always precede their
//! consumers and `backward` simply walks the list in reverse.

use crate::error::{Error, Result};
use crate::gradcore::tensor::{Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Broadcast(Var),
    Affine { x: Var, scale: T },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    RowSoftmax(Var),
    MeanRows(Var),
    Sum(Var),
    LayerNorm { x: Var, inv_std: Vec<T> },
    BceWithLogits { logits: Var, labels: Vec<T> },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Ordered record of executed operations.
#[derive(Debug, Default)]
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn matmul_kernel<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + aip * bv;
            }
        }
    }
    out
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        value.requires_grad = requires_grad;
        value.grad = None;
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims(&self, v: Var, op: &str) -> Result<(usize, usize)> {
        self.nodes[v.0].value.expect_matrix(op)
    }

    /// Records an input that is not differentiated.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Records a named trainable leaf; its gradient is reported by
    /// [`Tape::param_grads`].
    pub fn param(&mut self, name: impl Into<String>, t: &Tensor<T>) -> Var {
        let v = self.push(t.detached(), Op::Leaf, true);
        self.params.push((name.into(), v));
        v
    }

    /// Records an unnamed differentiable leaf (used for gradient checks on inputs).
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a, "matmul")?;
        let (k2, n) = self.dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b), rg))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Vec<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(name, self.shape(a), self.shape(b)));
        }
        Ok(self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b), rg))
    }

    /// Expands a `1×c`, `r×1` or `1×1` tensor to `rows × cols`.
    pub fn broadcast(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.dims(x, "broadcast")?;
        if (r != 1 && r != rows) || (c != 1 && c != cols) {
            return Err(Error::dim("broadcast", &[r, c], &[rows, cols]));
        }
        let src = self.value(x).data();
        let out = Tensor::from_fn(rows, cols, |i, j| {
            src[if r == 1 { 0 } else { i } * c + if c == 1 { 0 } else { j }]
        });
        let rg = self.rg(x);
        Ok(self.push(out, Op::Broadcast(x), rg))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let v = self.value(x);
        let out = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|&e| scale * e + shift).collect(),
        )
        .expect("same shape");
        let rg = self.rg(x);
        self.push(out, Op::Affine { x, scale }, rg)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        self.affine(x, s, T::zero())
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -T::one(), T::one())
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of zero tensors".into()))?;
        let (rows, _) = self.dims(first, "concat_cols")?;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims(p, "concat_cols")?;
            if r != rows {
                return Err(Error::dim("concat_cols", self.shape(first), self.shape(p)));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::matrix(rows, total, data),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of zero tensors".into()))?;
        let (_, cols) = self.dims(first, "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.dims(p, "concat_rows")?;
            if c != cols {
                return Err(Error::dim("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::matrix(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims(x, "slice_cols")?;
        if len == 0 || start + len > cols {
            return Err(Error::dim("slice_cols", &[rows, cols], &[start, len]));
        }
        let src = self.value(x);
        let out = Tensor::from_fn(rows, len, |i, j| src.get(i, start + j));
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceCols { x, start }, rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims(x, "slice_rows")?;
        if len == 0 || start + len > rows {
            return Err(Error::dim("slice_rows", &[rows, cols], &[start, len]));
        }
        let data = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(len, cols, data),
            Op::SliceRows { x, start },
            rg,
        ))
    }

    pub fn row(&mut self, x: Var, r: usize) -> Result<Var> {
        self.slice_rows(x, r, 1)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims(x, "transpose")?;
        let src = self.value(x);
        let out = Tensor::from_fn(cols, rows, |i, j| src.get(j, i));
        let rg = self.rg(x);
        Ok(self.push(out, Op::Transpose(x), rg))
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&e| f(e)).collect())
            .expect("same shape");
        let rg = self.rg(x);
        self.push(out, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, T::tanh, Op::Tanh(x))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let c = T::from_f64(GELU_C);
        let a = T::from_f64(GELU_A);
        let half = T::from_f64(0.5);
        self.map(
            x,
            move |v| half * v * (T::one() + (c * (v + a * v * v * v)).tanh()),
            Op::Gelu(x),
        )
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims(x, "row_softmax")?;
        let src = self.value(x);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let row = src.row_slice(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
            let sum = exps.iter().copied().fold(T::zero(), |a, b| a + b);
            data.extend(exps.into_iter().map(|e| e / sum));
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::matrix(rows, cols, data), Op::RowSoftmax(x), rg))
    }

    /// Mean over rows, giving `1 × cols`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.dims(x, "mean_rows")?;
        let src = self.value(x);
        let inv = T::one() / T::from_f64(rows as f64);
        let out = Tensor::from_fn(1, cols, |_, j| {
            (0..rows).fold(T::zero(), |acc, i| acc + src.get(i, j)) * inv
        });
        let rg = self.rg(x);
        Ok(self.push(out, Op::MeanRows(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self
            .value(x)
            .data()
            .iter()
            .copied()
            .fold(T::zero(), |a, b| a + b);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm(&mut self, x: Var, eps: T) -> Result<Var> {
        let (rows, cols) = self.dims(x, "layer_norm")?;
        let src = self.value(x);
        let n = T::from_f64(cols as f64);
        let mut data = Vec::with_capacity(rows * cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = src.row_slice(r);
            let mean = row.iter().copied().fold(T::zero(), |a, b| a + b) / n;
            let var = row
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .fold(T::zero(), |a, b| a + b)
                / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            data.extend(row.iter().map(|&v| (v - mean) * is));
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(rows, cols, data),
            Op::LayerNorm { x, inv_std },
            rg,
        ))
    }

    /// Mean binary cross-entropy over a vector of logits, in the stable
    /// `max(z,0) - z*y + ln(1 + e^-|z|)` form.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T]) -> Result<Var> {
        let z = self.value(logits);
        if z.numel() != labels.len() {
            return Err(Error::dim("bce_with_logits", z.shape(), &[labels.len()]));
        }
        if labels.is_empty() {
            return Err(Error::Contract("bce_with_logits on empty input".into()));
        }
        let total = z
            .data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p())
            .fold(T::zero(), |a, b| a + b);
        let loss = total / T::from_f64(labels.len() as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// Populates gradients of `loss` with respect to every differentiable
    /// node. Nodes that `loss` does not reach get zero gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].value.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if node.value.requires_grad {
                node.value.grad = Some(g.unwrap_or_else(|| vec![T::zero(); node.value.numel()]));
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.0].value.requires_grad {
                return;
            }
            let n = self.nodes[v.0].value.numel();
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).rows(), self.value(*a).cols());
                let n = self.value(*b).cols();
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |ga| {
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = T::zero();
                            for j in 0..n {
                                s = s + g[r * n + j] * bv[p * n + j];
                            }
                            ga[r * k + p] = ga[r * k + p] + s;
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for r in 0..m {
                        for p in 0..k {
                            let arp = av[r * k + p];
                            for j in 0..n {
                                gb[p * n + j] = gb[p * n + j] + arp * g[r * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| {
                    for (d, &s) in gb.iter_mut().zip(g) {
                        *d = *d - s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |ga| {
                    for ((d, &s), &o) in ga.iter_mut().zip(g).zip(bv) {
                        *d = *d + s * o;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((d, &s), &o) in gb.iter_mut().zip(g).zip(av) {
                        *d = *d + s * o;
                    }
                });
            }
            Op::Broadcast(x) => {
                let (r, c) = (self.value(*x).rows(), self.value(*x).cols());
                let (rows, cols) = (out.rows(), out.cols());
                acc(*x, &mut |gx| {
                    for i in 0..rows {
                        for j in 0..cols {
                            let src = if r == 1 { 0 } else { i } * c + if c == 1 { 0 } else { j };
                            gx[src] = gx[src] + g[i * cols + j];
                        }
                    }
                });
            }
            Op::Affine { x, scale } => acc(*x, &mut |gx| {
                for (d, &s) in gx.iter_mut().zip(g) {
                    *d = *d + s * *scale;
                }
            }),
            Op::ConcatCols(parts) => {
                let cols = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    acc(p, &mut |gp| {
                        for (r, row) in gp.chunks_mut(pc).enumerate() {
                            add_into(row, &g[r * cols + offset..r * cols + offset + pc]);
                        }
                    });
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    acc(p, &mut |gp| add_into(gp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::SliceCols { x, start } => {
                let (len, xc) = (out.cols(), self.value(*x).cols());
                acc(*x, &mut |gx| {
                    for (r, gr) in g.chunks(len).enumerate() {
                        add_into(&mut gx[r * xc + start..r * xc + start + len], gr);
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let cols = out.cols();
                acc(*x, &mut |gx| {
                    add_into(&mut gx[start * cols..start * cols + g.len()], g)
                });
            }
            Op::Transpose(x) => {
                let (rows, cols) = (out.rows(), out.cols());
                acc(*x, &mut |gx| {
                    for i in 0..rows {
                        for j in 0..cols {
                            gx[j * rows + i] = gx[j * rows + i] + g[i * cols + j];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => acc(*x, &mut |gx| {
                for ((d, &s), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                    *d = *d + s * y * (T::one() - y);
                }
            }),
            Op::Tanh(x) => acc(*x, &mut |gx| {
                for ((d, &s), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                    *d = *d + s * (T::one() - y * y);
                }
            }),
            Op::Gelu(x) => {
                let c = T::from_f64(GELU_C);
                let a = T::from_f64(GELU_A);
                let half = T::from_f64(0.5);
                let three = T::from_f64(3.0);
                let xv = self.value(*x).data();
                acc(*x, &mut |gx| {
                    for ((d, &s), &v) in gx.iter_mut().zip(g).zip(xv) {
                        let t = (c * (v + a * v * v * v)).tanh();
                        let dt = (T::one() - t * t) * c * (T::one() + three * a * v * v);
                        *d = *d + s * (half * (T::one() + t) + half * v * dt);
                    }
                });
            }
            Op::RowSoftmax(x) => {
                let cols = out.cols();
                acc(*x, &mut |gx| {
                    for (r, (gr, yr)) in g.chunks(cols).zip(out.data().chunks(cols)).enumerate() {
                        let dot = gr
                            .iter()
                            .zip(yr)
                            .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                        for j in 0..cols {
                            gx[r * cols + j] = gx[r * cols + j] + yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::MeanRows(x) => {
                let rows = self.value(*x).rows();
                let inv = T::one() / T::from_f64(rows as f64);
                acc(*x, &mut |gx| {
                    for row in gx.chunks_mut(g.len()) {
                        for (d, &s) in row.iter_mut().zip(g) {
                            *d = *d + s * inv;
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |gx| {
                for d in gx.iter_mut() {
                    *d = *d + g[0];
                }
            }),
            Op::LayerNorm { x, inv_std } => {
                let cols = out.cols();
                let n = T::from_f64(cols as f64);
                acc(*x, &mut |gx| {
                    for (r, (gr, yr)) in g.chunks(cols).zip(out.data().chunks(cols)).enumerate() {
                        let mg = gr.iter().copied().fold(T::zero(), |a, b| a + b) / n;
                        let mgy = gr
                            .iter()
                            .zip(yr)
                            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
                            / n;
                        for j in 0..cols {
                            gx[r * cols + j] =
                                gx[r * cols + j] + inv_std[r] * (gr[j] - mg - yr[j] * mgy);
                        }
                    }
                });
            }
            Op::BceWithLogits { logits, labels } => {
                let zv = self.value(*logits).data();
                let inv = g[0] / T::from_f64(labels.len() as f64);
                acc(*logits, &mut |gz| {
                    for ((d, &z), &y) in gz.iter_mut().zip(zv).zip(labels) {
                        *d = *d + (sigmoid(z) - y) * inv;
                    }
                });
            }
        }
    }

    /// Gradient of a node after [`Tape::backward`]; `None` for constants.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    /// Named parameter gradients in registration order.
    pub fn param_grads(&self) -> Vec<(String, Tensor<T>)> {
        self.params
            .iter()
            .map(|(name, v)| {
                let value = self.value(*v);
                let g = value
                    .grad
                    .clone()
                    .unwrap_or_else(|| vec![T::zero(); value.numel()]);
                (
                    name.clone(),
                    Tensor::new(value.shape().to_vec(), g).expect("grad shape"),
                )
            })
            .collect()
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
