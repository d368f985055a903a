//! Wengert-list reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Tape`] holding its value. Nodes
//! whose inputs are all constants are stored as constants, so only the part
//! of the graph that reaches a parameter pays for saved activations and a
//! backward rule.

use super::tensor::{gemm, Tensor};
use super::DiffError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// How an operand maps onto the output of a broadcasting binary op.
#[derive(Debug, Clone, Copy)]
enum Bcast {
    Full,
    Scalar,
    Row(usize),
}

impl Bcast {
    #[inline]
    fn index(self, i: usize) -> usize {
        match self {
            Bcast::Full => i,
            Bcast::Scalar => 0,
            Bcast::Row(m) => i % m,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary {
        kind: BinaryKind,
        lhs: Var,
        rhs: Var,
        lmap: Bcast,
        rmap: Bcast,
    },
    AddScalar(Var),
    MulScalar(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Abs(Var),
    MaxScalar(Var, f64),
    MinScalar(Var, f64),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize),
    Sum(Var),
    Mean(Var),
    Std(Var),
    ScaleRows(Var, Var),
    LstmCell {
        x: Var,
        state: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        /// post-activation gates `[i | f | g | o]`, one row per sequence
        gates: Vec<f64>,
        /// `tanh(c_new)`
        tanh_c: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by the leaf [`Var`]s.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Removes and returns the gradient for `var`.
    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

/// Operation record for one forward pass. Single-threaded; build one tape per
/// job.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<(), DiffError> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(DiffError::NonFinite { op })
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

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a constant leaf (no gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Scalar value of a single-element node.
    pub fn item(&self, var: Var) -> Option<f64> {
        self.value(var).item()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn check_var(&self, v: Var) -> Result<(), DiffError> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(DiffError::UnknownVar(v.0))
        }
    }

    // ---------------------------------------------------------------- linear

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        self.check_var(b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() > 2 || tb.shape().len() != 2 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k) = ta.dims2();
        let (k2, n) = tb.dims2();
        if k != k2 {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn broadcast_maps(
        &self,
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
    ) -> Result<(Vec<usize>, Bcast, Bcast), DiffError> {
        let mismatch = || DiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        };
        if a.shape() == b.shape() {
            return Ok((a.shape().to_vec(), Bcast::Full, Bcast::Full));
        }
        if b.numel() == 1 {
            return Ok((a.shape().to_vec(), Bcast::Full, Bcast::Scalar));
        }
        if a.numel() == 1 {
            return Ok((b.shape().to_vec(), Bcast::Scalar, Bcast::Full));
        }
        let is_row_of = |row: &Tensor, full: &Tensor| {
            let m = full.last_dim();
            full.shape().len() == 2 && row.numel() == m && (row.shape() == [m] || row.shape() == [1, m])
        };
        if is_row_of(b, a) {
            return Ok((a.shape().to_vec(), Bcast::Full, Bcast::Row(a.last_dim())));
        }
        if is_row_of(a, b) {
            return Ok((b.shape().to_vec(), Bcast::Row(b.last_dim()), Bcast::Full));
        }
        Err(mismatch())
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        self.check_var(b)?;
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        let (ta, tb) = (self.value(a), self.value(b));
        let (shape, lmap, rmap) = self.broadcast_maps(name, ta, tb)?;
        if kind == BinaryKind::Div && tb.data().contains(&0.0) {
            return Err(DiffError::DivisionByZero);
        }
        let numel: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let out: Vec<f64> = (0..numel)
            .map(|i| {
                let (x, y) = (da[lmap.index(i)], db[rmap.index(i)]);
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                }
            })
            .collect();
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            value,
            Op::Binary {
                kind,
                lhs: a,
                rhs: b,
                lmap,
                rmap,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let value = self.value(a).map(|v| v + c);
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::AddScalar(a), rg))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let value = self.value(a).map(|v| v * c);
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::MulScalar(a, c), rg))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, DiffError> {
        self.mul_scalar(a, -1.0)
    }

    /// `c - a`.
    pub fn rsub_scalar(&mut self, c: f64, a: Var) -> Result<Var, DiffError> {
        let n = self.neg(a)?;
        self.add_scalar(n, c)
    }

    // ------------------------------------------------------------ pointwise

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        Ok(self.push(value, op, rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.unary(a, f64::exp, Op::Exp(a))?;
        check_finite("exp", self.value(v))?;
        Ok(v)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        if let Some(&bad) = self.value(a).data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(DiffError::Domain { op: "ln", value: bad });
        }
        self.unary(a, f64::ln, Op::Ln(a))
    }

    /// Square root. The derivative at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        if let Some(&bad) = self.value(a).data().iter().find(|&&v| v < 0.0 || v.is_nan()) {
            return Err(DiffError::Domain { op: "sqrt", value: bad });
        }
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, DiffError> {
        self.mul(a, a)
    }

    /// Elementwise `max(a, c)`; on ties the gradient flows to `a`.
    pub fn max_scalar(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        self.unary(a, |v| if v >= c { v } else { c }, Op::MaxScalar(a, c))
    }

    /// Elementwise `min(a, c)`; on ties the gradient flows to `a`.
    pub fn min_scalar(&mut self, a: Var, c: f64) -> Result<Var, DiffError> {
        self.unary(a, |v| if v <= c { v } else { c }, Op::MinScalar(a, c))
    }

    // ------------------------------------------------------------ structural

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let t = self.value(a);
        let (rows, cols) = t.dims2();
        let mut out = t.data().to_vec();
        for r in 0..rows {
            let row = &mut out[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Softmax(a), rg))
    }

    /// Concatenation along the last axis of 2-D tensors with equal row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        if parts.is_empty() {
            return Err(DiffError::InvalidArgument("concat of zero tensors".into()));
        }
        for &p in parts {
            self.check_var(p)?;
        }
        let rows = self.value(parts[0]).dims2().0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            if r != rows {
                return Err(DiffError::ShapeMismatch {
                    op: "concat",
                    left: self.value(parts[0]).shape().to_vec(),
                    right: self.value(p).shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let value = Tensor::new(vec![rows, total], out)?;
        let rg = self.rg(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `[start, end)` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let t = self.value(a);
        let (rows, cols) = t.dims2();
        if start >= end || end > cols {
            return Err(DiffError::InvalidArgument(format!(
                "column slice {start}..{end} of shape {:?}",
                t.shape()
            )));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&t.data()[r * cols + start..r * cols + end]);
        }
        let value = Tensor::new(vec![rows, w], out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start, end), rg))
    }

    /// Rows `[start, end)` of a 2-D tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let t = self.value(a);
        let (rows, cols) = t.dims2();
        if start >= end || end > rows {
            return Err(DiffError::InvalidArgument(format!(
                "row slice {start}..{end} of shape {:?}",
                t.shape()
            )));
        }
        let value = Tensor::new(vec![end - start, cols], t.data()[start * cols..end * cols].to_vec())?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Sum(a), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(DiffError::InvalidArgument("mean of empty tensor".into()));
        }
        let value = Tensor::scalar(t.sum() / t.numel() as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Mean(a), rg))
    }

    /// Population standard deviation (divisor `n`) over all elements.
    pub fn std(&mut self, a: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(DiffError::InvalidArgument("std of empty tensor".into()));
        }
        let value = Tensor::scalar(population_std(t.data()));
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Std(a), rg))
    }

    /// Multiplies row `r` of `a` (`N x M`) by `s[r]` (`s` is `N x 1` or `[N]`).
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var, DiffError> {
        self.check_var(a)?;
        self.check_var(s)?;
        let (ta, ts) = (self.value(a), self.value(s));
        let (rows, cols) = ta.dims2();
        if ts.numel() != rows || (ts.last_dim() != 1 && ts.shape().len() != 1) {
            return Err(DiffError::ShapeMismatch {
                op: "scale_rows",
                left: ta.shape().to_vec(),
                right: ts.shape().to_vec(),
            });
        }
        let mut out = ta.data().to_vec();
        for r in 0..rows {
            let k = ts.data()[r];
            out[r * cols..(r + 1) * cols].iter_mut().for_each(|v| *v *= k);
        }
        let value = Tensor::new(ta.shape().to_vec(), out)?;
        let rg = self.rg(&[a, s]);
        Ok(self.push(value, Op::ScaleRows(a, s), rg))
    }

    /// One LSTM step over a batch of independent sequences.
    ///
    /// `state` is `N x 2H` holding `[h | c]`; `w_ih` is `I x 4H`, `w_hh` is
    /// `H x 4H`, `bias` is `[4H]` with gate blocks ordered input, forget,
    /// cell, output. Returns the next `[h | c]`.
    pub fn lstm_cell(&mut self, x: Var, state: Var, w_ih: Var, w_hh: Var, bias: Var) -> Result<Var, DiffError> {
        for v in [x, state, w_ih, w_hh, bias] {
            self.check_var(v)?;
        }
        let (tx, ts) = (self.value(x), self.value(state));
        let (tw_ih, tw_hh, tb) = (self.value(w_ih), self.value(w_hh), self.value(bias));
        let (n, input) = tx.dims2();
        let (hr, hc) = tw_hh.dims2();
        let h4 = hc;
        let h = hr;
        let bad = |left: &Tensor, right: &Tensor| DiffError::ShapeMismatch {
            op: "lstm_cell",
            left: left.shape().to_vec(),
            right: right.shape().to_vec(),
        };
        if h4 != 4 * h {
            return Err(bad(tw_hh, tb));
        }
        if tw_ih.dims2() != (input, h4) {
            return Err(bad(tx, tw_ih));
        }
        if ts.dims2() != (n, 2 * h) {
            return Err(bad(tx, ts));
        }
        if tb.numel() != h4 {
            return Err(bad(tw_hh, tb));
        }

        let mut pre = vec![0.0; n * h4];
        for r in 0..n {
            pre[r * h4..(r + 1) * h4].copy_from_slice(tb.data());
        }
        let xh = join_input(tx.data(), ts.data(), n, input, h);
        let w = stack_rows(tw_ih.data(), tw_hh.data());
        gemm(n, input + h, h4, &xh, false, &w, false, &mut pre, 1.0);

        let mut out = vec![0.0; n * 2 * h];
        let mut tanh_c = vec![0.0; n * h];
        let c_prev = ts.data();
        for r in 0..n {
            let g = &mut pre[r * h4..(r + 1) * h4];
            for j in 0..h {
                g[j] = sigmoid(g[j]);
                g[h + j] = sigmoid(g[h + j]);
                g[2 * h + j] = tanh_via_exp(g[2 * h + j]);
                g[3 * h + j] = sigmoid(g[3 * h + j]);
                let c = g[h + j] * c_prev[r * 2 * h + h + j] + g[j] * g[2 * h + j];
                let tc = tanh_via_exp(c);
                tanh_c[r * h + j] = tc;
                out[r * 2 * h + j] = g[3 * h + j] * tc;
                out[r * 2 * h + h + j] = c;
            }
        }
        let value = Tensor::new(vec![n, 2 * h], out)?;
        let rg = self.rg(&[x, state, w_ih, w_hh, bias]);
        let (gates, tanh_c) = if rg { (pre, tanh_c) } else { (Vec::new(), Vec::new()) };
        Ok(self.push(
            value,
            Op::LstmCell {
                x,
                state,
                w_ih,
                w_hh,
                bias,
                gates,
                tanh_c,
            },
            rg,
        ))
    }

    // -------------------------------------------------------------- backward

    /// Reverse pass from a scalar `loss`. Every leaf recorded with
    /// [`Tape::param`] receives a gradient, zero when unreachable.
    pub fn backward(&self, loss: Var) -> Result<Gradients, DiffError> {
        if self.nodes.is_empty() {
            return Err(DiffError::EmptyTape);
        }
        self.check_var(loss)?;
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(DiffError::NonScalarLoss {
                shape: lt.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn buf<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut [f64]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.nodes[v.0].value.shape()));
        }
        slot.as_mut().map(|t| t.data_mut())
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2();
                let n = tb.dims2().1;
                if let Some(da) = self.buf(grads, *a) {
                    gemm(m, n, k, gd, false, tb.data(), true, da, 1.0);
                }
                if let Some(db) = self.buf(grads, *b) {
                    gemm(k, m, n, ta.data(), true, gd, false, db, 1.0);
                }
            }
            Op::Binary {
                kind,
                lhs,
                rhs,
                lmap,
                rmap,
            } => {
                let (xa, xb) = (self.value(*lhs).data(), self.value(*rhs).data());
                if let Some(da) = self.buf(grads, *lhs) {
                    for (i, &gi) in gd.iter().enumerate() {
                        let (ia, ib) = (lmap.index(i), rmap.index(i));
                        da[ia] += match kind {
                            BinaryKind::Add | BinaryKind::Sub => gi,
                            BinaryKind::Mul => gi * xb[ib],
                            BinaryKind::Div => gi / xb[ib],
                        };
                    }
                }
                if let Some(db) = self.buf(grads, *rhs) {
                    for (i, &gi) in gd.iter().enumerate() {
                        let (ia, ib) = (lmap.index(i), rmap.index(i));
                        db[ib] += match kind {
                            BinaryKind::Add => gi,
                            BinaryKind::Sub => -gi,
                            BinaryKind::Mul => gi * xa[ia],
                            BinaryKind::Div => -gi * xa[ia] / (xb[ib] * xb[ib]),
                        };
                    }
                }
            }
            Op::AddScalar(a) => self.pointwise(grads, *a, gd, |_, gi| gi),
            Op::MulScalar(a, c) => self.pointwise(grads, *a, gd, |_, gi| gi * c),
            Op::Tanh(a) => self.pointwise(grads, *a, gd, |i, gi| gi * (1.0 - out[i] * out[i])),
            Op::Sigmoid(a) => self.pointwise(grads, *a, gd, |i, gi| gi * out[i] * (1.0 - out[i])),
            Op::Exp(a) => self.pointwise(grads, *a, gd, |i, gi| gi * out[i]),
            Op::Ln(a) => {
                let x = self.value(*a).data();
                self.pointwise(grads, *a, gd, |i, gi| gi / x[i])
            }
            Op::Sqrt(a) => self.pointwise(
                grads,
                *a,
                gd,
                |i, gi| {
                    if out[i] > 0.0 {
                        gi * 0.5 / out[i]
                    } else {
                        0.0
                    }
                },
            ),
            Op::Abs(a) => {
                let x = self.value(*a).data();
                self.pointwise(grads, *a, gd, |i, gi| {
                    if x[i] > 0.0 {
                        gi
                    } else if x[i] < 0.0 {
                        -gi
                    } else {
                        0.0
                    }
                })
            }
            Op::MaxScalar(a, c) => {
                let x = self.value(*a).data();
                self.pointwise(grads, *a, gd, |i, gi| if x[i] >= *c { gi } else { 0.0 })
            }
            Op::MinScalar(a, c) => {
                let x = self.value(*a).data();
                self.pointwise(grads, *a, gd, |i, gi| if x[i] <= *c { gi } else { 0.0 })
            }
            Op::Softmax(a) => {
                let (rows, cols) = node.value.dims2();
                if let Some(da) = self.buf(grads, *a) {
                    for r in 0..rows {
                        let y = &out[r * cols..(r + 1) * cols];
                        let gr = &gd[r * cols..(r + 1) * cols];
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            da[r * cols + c] += y[c] * (gr[c] - dot);
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).dims2().1;
                    if let Some(dp) = self.buf(grads, p) {
                        for r in 0..rows {
                            for c in 0..w {
                                dp[r * w + c] += gd[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start, end) => {
                let cols = self.value(*a).dims2().1;
                let w = end - start;
                let rows = node.value.dims2().0;
                if let Some(da) = self.buf(grads, *a) {
                    for r in 0..rows {
                        for c in 0..w {
                            da[r * cols + start + c] += gd[r * w + c];
                        }
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let cols = node.value.dims2().1;
                if let Some(da) = self.buf(grads, *a) {
                    let base = start * cols;
                    for (i, &gi) in gd.iter().enumerate() {
                        da[base + i] += gi;
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(da) = self.buf(grads, *a) {
                    da.iter_mut().for_each(|v| *v += gd[0]);
                }
            }
            Op::Mean(a) => {
                if let Some(da) = self.buf(grads, *a) {
                    let k = gd[0] / da.len() as f64;
                    da.iter_mut().for_each(|v| *v += k);
                }
            }
            Op::Std(a) => {
                let x = self.value(*a).data();
                let sd = out[0];
                if let Some(da) = self.buf(grads, *a) {
                    if sd > 0.0 {
                        let n = x.len() as f64;
                        let mu = x.iter().sum::<f64>() / n;
                        for (d, &xi) in da.iter_mut().zip(x) {
                            *d += gd[0] * (xi - mu) / (n * sd);
                        }
                    }
                }
            }
            Op::ScaleRows(a, s) => {
                let (rows, cols) = node.value.dims2();
                let xa = self.value(*a).data();
                let xs = self.value(*s).data();
                if let Some(da) = self.buf(grads, *a) {
                    for r in 0..rows {
                        for c in 0..cols {
                            da[r * cols + c] += gd[r * cols + c] * xs[r];
                        }
                    }
                }
                if let Some(ds) = self.buf(grads, *s) {
                    for r in 0..rows {
                        let mut acc = 0.0;
                        for c in 0..cols {
                            acc += gd[r * cols + c] * xa[r * cols + c];
                        }
                        ds[r] += acc;
                    }
                }
            }
            Op::LstmCell {
                x,
                state,
                w_ih,
                w_hh,
                bias,
                gates,
                tanh_c,
            } => self.lstm_backward(grads, gd, *x, *state, *w_ih, *w_hh, *bias, gates, tanh_c),
        }
    }

    fn pointwise(&self, grads: &mut [Option<Tensor>], a: Var, gd: &[f64], f: impl Fn(usize, f64) -> f64) {
        if let Some(da) = self.buf(grads, a) {
            for (i, &gi) in gd.iter().enumerate() {
                da[i] += f(i, gi);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        grads: &mut [Option<Tensor>],
        gd: &[f64],
        x: Var,
        state: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        gates: &[f64],
        tanh_c: &[f64],
    ) {
        let tx = self.value(x);
        let ts = self.value(state);
        let (n, input) = tx.dims2();
        let h = ts.dims2().1 / 2;
        let h4 = 4 * h;
        let sd = ts.data();

        // gradient w.r.t. gate pre-activations
        let mut da = vec![0.0; n * h4];
        let mut dc_prev = vec![0.0; n * h];
        for r in 0..n {
            let gt = &gates[r * h4..(r + 1) * h4];
            for j in 0..h {
                let (i, f, g, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                let tc = tanh_c[r * h + j];
                let dh = gd[r * 2 * h + j];
                let dc = gd[r * 2 * h + h + j] + dh * o * (1.0 - tc * tc);
                let c_prev = sd[r * 2 * h + h + j];
                let row = &mut da[r * h4..(r + 1) * h4];
                row[j] = dc * g * i * (1.0 - i);
                row[h + j] = dc * c_prev * f * (1.0 - f);
                row[2 * h + j] = dc * i * (1.0 - g * g);
                row[3 * h + j] = dh * tc * o * (1.0 - o);
                dc_prev[r * h + j] = dc * f;
            }
        }
        let k = input + h;
        let (rg_ih, rg_hh) = (self.requires_grad(w_ih), self.requires_grad(w_hh));
        if rg_ih || rg_hh {
            let xh = join_input(tx.data(), sd, n, input, h);
            let mut dw = vec![0.0; k * h4];
            gemm(k, n, h4, &xh, true, &da, false, &mut dw, 0.0);
            if let Some(d) = self.buf(grads, w_ih) {
                for (a, b) in d.iter_mut().zip(&dw[..input * h4]) {
                    *a += b;
                }
            }
            if let Some(d) = self.buf(grads, w_hh) {
                for (a, b) in d.iter_mut().zip(&dw[input * h4..]) {
                    *a += b;
                }
            }
        }
        if let Some(db) = self.buf(grads, bias) {
            for r in 0..n {
                for (d, &v) in db.iter_mut().zip(&da[r * h4..(r + 1) * h4]) {
                    *d += v;
                }
            }
        }
        let (rg_x, rg_state) = (self.requires_grad(x), self.requires_grad(state));
        if rg_x || rg_state {
            let w = stack_rows(self.value(w_ih).data(), self.value(w_hh).data());
            let mut dxh = vec![0.0; n * k];
            gemm(n, h4, k, &da, false, &w, true, &mut dxh, 0.0);
            if let Some(dx) = self.buf(grads, x) {
                for r in 0..n {
                    for c in 0..input {
                        dx[r * input + c] += dxh[r * k + c];
                    }
                }
            }
            if let Some(ds) = self.buf(grads, state) {
                for r in 0..n {
                    for j in 0..h {
                        ds[r * 2 * h + j] += dxh[r * k + input + j];
                        ds[r * 2 * h + h + j] += dc_prev[r * h + j];
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `tanh` through a single `exp`; within a few ulps of `f64::tanh` and
/// noticeably cheaper inside the LSTM inner loop.
#[inline]
fn tanh_via_exp(v: f64) -> f64 {
    if v.abs() > 20.0 {
        return v.signum();
    }
    let e = (-2.0 * v.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(v)
}

pub(crate) fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n).sqrt()
}

/// Rows of `[x | h]` from the input and the `h` half of `[h | c]`.
fn join_input(x: &[f64], state: &[f64], n: usize, input: usize, h: usize) -> Vec<f64> {
    let k = input + h;
    let mut out = vec![0.0; n * k];
    for r in 0..n {
        out[r * k..r * k + input].copy_from_slice(&x[r * input..(r + 1) * input]);
        out[r * k + input..(r + 1) * k].copy_from_slice(&state[r * 2 * h..r * 2 * h + h]);
    }
    out
}

fn stack_rows(top: &[f64], bottom: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(top.len() + bottom.len());
    w.extend_from_slice(top);
    w.extend_from_slice(bottom);
    w
}

#[cfg(test)]
impl Var {
    pub(crate) fn default_for_tests() -> Self {
        Var(0)
    }
}
