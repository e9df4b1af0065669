//! Reverse-mode tape over dense tensors.
//!
//! Every primitive evaluates eagerly and appends one node holding its output.
//! Nodes are stored in creation order, so the tape is topologically sorted by
//! construction and `backward` is a single reverse sweep.

use crate::error::{Error, Result};
use crate::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'a, T> {
    Owned(Tensor<T>),
    Borrowed(&'a Tensor<T>),
}

impl<T> std::ops::Deref for Value<'_, T> {
    type Target = Tensor<T>;

    fn deref(&self) -> &Tensor<T> {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op<T> {
    /// Leaf or a value computed only from constants.
    Source,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, Var, Var),
    ScaleShift(Var, T),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    Stack(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Gather(Var, Vec<usize>),
    Select(Vec<bool>, Var, Var),
    Conv1d(Var, Var, Var),
    MaxPoolTime(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    Bce {
        probs: Var,
        targets: Vec<T>,
        scale: T,
        eps: T,
    },
}

struct Node<'a, T> {
    value: Value<'a, T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Clamp applied to probabilities before taking logs in the cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
    checked: bool,
}

impl<T: Real> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            checked: false,
        }
    }

    /// A tape that fails with [`Error::NonFinite`] as soon as any op produces NaN or infinity.
    pub fn checked() -> Self {
        Tape {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf borrowing an existing tensor.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.push_raw(Value::Borrowed(t), Op::Source, true)
    }

    /// Non-trainable leaf borrowing an existing tensor.
    pub fn constant_ref(&mut self, t: &'a Tensor<T>) -> Var {
        self.push_raw(Value::Borrowed(t), Op::Source, false)
    }

    /// Trainable leaf owning its tensor.
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push_raw(Value::Owned(t), Op::Source, true)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_raw(Value::Owned(t), Op::Source, false)
    }

    fn push_raw(&mut self, value: Value<'a, T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, out: Tensor<T>, op: Op<T>, inputs: &[Var], name: &'static str) -> Result<Var> {
        if self.checked {
            out.check_finite(name)?;
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if rg { op } else { Op::Source };
        Ok(self.push_raw(Value::Owned(out), op, rg))
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Shape {
            op,
            lhs: self.value(a).shape().to_vec(),
            rhs: self.value(b).shape().to_vec(),
        }
    }

    // ---------------------------------------------------------------- primitives

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b], "matmul")
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err(name, a, b));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), &[a, b], "sub")
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), &[a, b], "mul")
    }

    /// Adds a length-`n` bias to every row of `a` (last axis `n`).
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.shape().len() != 1 || ta.cols() != tb.len() {
            return Err(self.shape_err("add_bias", a, bias));
        }
        let n = tb.len();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push(out, Op::AddBias(a, bias), &[a, bias], "add_bias")
    }

    /// Dense affine layer `x w + b` with `x: [m,k]`, `w: [k,n]`, `b: [n]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] {
            return Err(self.shape_err("affine", x, w));
        }
        if sb.len() != 1 || sb[0] != sw[1] {
            return Err(self.shape_err("affine", w, b));
        }
        let (m, k, n) = (sx[0], sx[1], sw[1]);
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(self.value(b).data());
        }
        matmul_acc(self.value(x).data(), self.value(w).data(), &mut out, m, k, n);
        self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::Affine(x, w, b),
            &[x, w, b],
            "affine",
        )
    }

    /// `alpha * a + beta`, elementwise.
    pub fn scale_shift(&mut self, a: Var, alpha: T, beta: T) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| alpha * x + beta).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push(out, Op::ScaleShift(a, alpha), &[a], "scale_shift")
    }

    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.scale_shift(a, -T::one(), T::one())
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::validation("concat of zero tensors"))?;
        let base = self.value(first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::validation(format!(
                "concat axis {axis} out of range for rank {}",
                base.len()
            )));
        }
        let mut axis_total = 0;
        for &v in inputs {
            let s = self.value(v).shape();
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(self.shape_err("concat", first, v));
            }
            axis_total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let rest: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * axis_total * rest);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * rest;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = axis_total;
        self.push(
            Tensor::from_parts(shape, out),
            Op::Concat(inputs.to_vec(), axis),
            inputs,
            "concat",
        )
    }

    /// Elements `start..start+len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::Shape {
                op: "slice",
                lhs: shape,
                rhs: vec![axis, start, len],
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let rest: usize = shape[axis + 1..].iter().product();
        let in_chunk = shape[axis] * rest;
        let data = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * rest);
        for o in 0..outer {
            let base = o * in_chunk + start * rest;
            out.extend_from_slice(&data[base..base + len * rest]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.push(
            Tensor::from_parts(out_shape, out),
            Op::Slice(a, axis, start),
            &[a],
            "slice",
        )
    }

    /// Stacks `T` tensors of shape `[B,H]` into one `[B,T,H]` sequence tensor.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        let first = *steps
            .first()
            .ok_or_else(|| Error::validation("stack of zero time steps"))?;
        let s = self.value(first).shape().to_vec();
        if s.len() != 2 {
            return Err(self.shape_err("stack_time", first, first));
        }
        for &v in steps {
            if self.value(v).shape() != s.as_slice() {
                return Err(self.shape_err("stack_time", first, v));
            }
        }
        let (b, h, t) = (s[0], s[1], steps.len());
        let mut out = vec![T::zero(); b * t * h];
        for (ti, &v) in steps.iter().enumerate() {
            let d = self.value(v).data();
            for bi in 0..b {
                out[(bi * t + ti) * h..(bi * t + ti + 1) * h].copy_from_slice(&d[bi * h..(bi + 1) * h]);
            }
        }
        self.push(
            Tensor::from_parts(vec![b, t, h], out),
            Op::Stack(steps.to_vec()),
            steps,
            "stack_time",
        )
    }

    fn unary(&mut self, a: Var, op: Op<T>, name: &'static str, f: impl Fn(T) -> T) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push(out, op, &[a], name)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), "sigmoid", sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(a), "tanh", |x| x.tanh())
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a), "relu", |x| if x > T::zero() { x } else { T::zero() })
    }

    /// Row lookup: `table[indices[i], :]` for each `i`, giving `[indices.len(), D]`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(self.shape_err("gather_rows", table, table));
        }
        let (rows, d) = (t.shape()[0], t.shape()[1]);
        if indices.is_empty() {
            return Err(Error::validation("gather_rows with no indices"));
        }
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= rows {
                return Err(Error::validation(format!(
                    "gather_rows index {i} out of range for {rows} rows"
                )));
            }
            out.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_parts(vec![indices.len(), d], out);
        self.push(out, Op::Gather(table, indices.to_vec()), &[table], "gather_rows")
    }

    /// Row-wise choice: row `i` comes from `on` where `mask[i]`, else from `off`.
    pub fn select_rows(&mut self, mask: &[bool], on: Var, off: Var) -> Result<Var> {
        if self.value(on).shape() != self.value(off).shape() {
            return Err(self.shape_err("select_rows", on, off));
        }
        let (ton, toff) = (self.value(on), self.value(off));
        if ton.rows() != mask.len() {
            return Err(Error::Shape {
                op: "select_rows",
                lhs: ton.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let mut out = Vec::with_capacity(ton.len());
        for (i, &m) in mask.iter().enumerate() {
            out.extend_from_slice(if m { ton.row(i) } else { toff.row(i) });
        }
        let out = Tensor::from_parts(ton.shape().to_vec(), out);
        self.push(out, Op::Select(mask.to_vec(), on, off), &[on, off], "select_rows")
    }

    /// 1-D convolution, stride 1, valid padding.
    ///
    /// `input: [B,T,C]`, `weight: [F,K,C]`, `bias: [F]` gives `[B, T-K+1, F]`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (si, sw, sb) = (
            self.value(input).shape().to_vec(),
            self.value(weight).shape().to_vec(),
            self.value(bias).shape().to_vec(),
        );
        if si.len() != 3 || sw.len() != 3 || si[2] != sw[2] || si[1] < sw[1] {
            return Err(self.shape_err("conv1d", input, weight));
        }
        if sb.len() != 1 || sb[0] != sw[0] {
            return Err(self.shape_err("conv1d", weight, bias));
        }
        let (b, t, c) = (si[0], si[1], si[2]);
        let (f, k) = (sw[0], sw[1]);
        let t_out = t - k + 1;
        let window = k * c;
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let bs = self.value(bias).data();
        let mut out = Vec::with_capacity(b * t_out * f);
        for bi in 0..b {
            for ti in 0..t_out {
                let start = (bi * t + ti) * c;
                let win = &x[start..start + window];
                for fi in 0..f {
                    let wf = &w[fi * window..(fi + 1) * window];
                    let mut acc = bs[fi];
                    for (&xv, &wv) in win.iter().zip(wf) {
                        acc += xv * wv;
                    }
                    out.push(acc);
                }
            }
        }
        let out = Tensor::from_parts(vec![b, t_out, f], out);
        self.push(out, Op::Conv1d(input, weight, bias), &[input, weight, bias], "conv1d")
    }

    /// Max over the time axis: `[B,T,F] -> [B,F]`. Ties resolve to the earliest step.
    pub fn max_pool_time(&mut self, input: Var) -> Result<Var> {
        let s = self.value(input).shape().to_vec();
        if s.len() != 3 {
            return Err(self.shape_err("max_pool_time", input, input));
        }
        let (b, t, f) = (s[0], s[1], s[2]);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(b * f);
        let mut argmax = Vec::with_capacity(b * f);
        for bi in 0..b {
            for fi in 0..f {
                let mut best = (bi * t) * f + fi;
                for ti in 1..t {
                    let idx = (bi * t + ti) * f + fi;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
        let out = Tensor::from_parts(vec![b, f], out);
        self.push(out, Op::MaxPoolTime(input, argmax), &[input], "max_pool_time")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().fold(T::zero(), |acc, &x| acc + x);
        self.push(Tensor::scalar(s), Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().fold(T::zero(), |acc, &x| acc + x);
        let m = s / T::from_usize(t.len()).expect("len fits");
        self.push(Tensor::scalar(m), Op::Mean(a), &[a], "mean")
    }

    /// Mean binary cross-entropy over all elements.
    pub fn bce_loss(&mut self, probs: Var, targets: &Tensor<T>) -> Result<Var> {
        let n = T::from_usize(targets.len()).expect("len fits");
        self.bce_loss_scaled(probs, targets, T::one() / n)
    }

    /// Binary cross-entropy summed over all elements and multiplied by `scale`.
    ///
    /// Sharded training passes `1 / (batch * labels)` so per-shard losses add
    /// up to the batch mean.
    pub fn bce_loss_scaled(&mut self, probs: Var, targets: &Tensor<T>, scale: T) -> Result<Var> {
        let tp = self.value(probs);
        if tp.shape() != targets.shape() {
            return Err(Error::Shape {
                op: "bce_loss",
                lhs: tp.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        let eps = T::lit(BCE_EPS);
        let mut acc = T::zero();
        for (&p, &y) in tp.data().iter().zip(targets.data()) {
            acc += bce_term(p, y, eps);
        }
        let out = Tensor::scalar(acc * scale);
        let op = Op::Bce {
            probs,
            targets: targets.data().to_vec(),
            scale,
            eps,
        };
        self.push(out, op, &[probs], "bce_loss")
    }

    // ---------------------------------------------------------------- backward

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Gradients accumulate by summation across fan-out. Nodes that do not
    /// reach `loss` get no entry, which [`Gradients::get_or_zeros`] reads as zero.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::validation(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match &node.op {
                Op::Source => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn backprop_node(&self, node: &Node<'a, T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = &*node.value;
        match &node.op {
            Op::Source => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_nt_acc(g, tb.data(), ga, m, n, k);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_tn_acc(ta.data(), g, gb, m, k, n);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.acc(grads, v) {
                        add_into(gv, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (o, &x) in gb.iter_mut().zip(g) {
                        *o -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), &y) in ga.iter_mut().zip(g).zip(tb.data()) {
                        *o += x * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, &x), &y) in gb.iter_mut().zip(g).zip(ta.data()) {
                        *o += x * y;
                    }
                }
            }
            Op::AddBias(a, bias) => {
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Affine(x, w, b) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (m, k, n) = (tx.shape()[0], tx.shape()[1], tw.shape()[1]);
                if let Some(gx) = self.acc(grads, *x) {
                    matmul_nt_acc(g, tw.data(), gx, m, n, k);
                }
                if let Some(gw) = self.acc(grads, *w) {
                    matmul_tn_acc(tx.data(), g, gw, m, k, n);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::ScaleShift(a, alpha) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, &x) in ga.iter_mut().zip(g) {
                        *o += *alpha * x;
                    }
                }
            }
            Op::Concat(inputs, axis) => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let rest: usize = shape[*axis + 1..].iter().product();
                let out_chunk = shape[*axis] * rest;
                let mut offset = 0;
                for &v in inputs {
                    let chunk = self.value(v).shape()[*axis] * rest;
                    if let Some(gv) = self.acc(grads, v) {
                        for o in 0..outer {
                            let src = &g[o * out_chunk + offset..o * out_chunk + offset + chunk];
                            add_into(&mut gv[o * chunk..(o + 1) * chunk], src);
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Slice(a, axis, start) => {
                let in_shape = self.value(*a).shape();
                let outer: usize = in_shape[..*axis].iter().product();
                let rest: usize = in_shape[*axis + 1..].iter().product();
                let in_chunk = in_shape[*axis] * rest;
                let len = out.shape()[*axis] * rest;
                if let Some(ga) = self.acc(grads, *a) {
                    for o in 0..outer {
                        let base = o * in_chunk + start * rest;
                        add_into(&mut ga[base..base + len], &g[o * len..(o + 1) * len]);
                    }
                }
            }
            Op::Stack(steps) => {
                let (b, t, h) = (out.shape()[0], out.shape()[1], out.shape()[2]);
                for (ti, &v) in steps.iter().enumerate() {
                    if let Some(gv) = self.acc(grads, v) {
                        for bi in 0..b {
                            let src = &g[(bi * t + ti) * h..(bi * t + ti + 1) * h];
                            add_into(&mut gv[bi * h..(bi + 1) * h], src);
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                        *o += x * y * (T::one() - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                        *o += x * (T::one() - y * y);
                    }
                }
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), &inp) in ga.iter_mut().zip(g).zip(ta.data()) {
                        if inp > T::zero() {
                            *o += x;
                        }
                    }
                }
            }
            Op::Gather(table, indices) => {
                let d = out.cols();
                if let Some(gt) = self.acc(grads, *table) {
                    for (r, &i) in indices.iter().enumerate() {
                        add_into(&mut gt[i * d..(i + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                }
            }
            Op::Select(mask, on, off) => {
                let c = out.cols();
                for (v, want) in [(*on, true), (*off, false)] {
                    if let Some(gv) = self.acc(grads, v) {
                        for (r, &m) in mask.iter().enumerate() {
                            if m == want {
                                add_into(&mut gv[r * c..(r + 1) * c], &g[r * c..(r + 1) * c]);
                            }
                        }
                    }
                }
            }
            Op::Conv1d(input, weight, bias) => {
                let (ti, tw) = (self.value(*input), self.value(*weight));
                let (b, t, c) = (ti.shape()[0], ti.shape()[1], ti.shape()[2]);
                let (f, k) = (tw.shape()[0], tw.shape()[1]);
                let t_out = t - k + 1;
                let window = k * c;
                if let Some(gb) = self.acc(grads, *bias) {
                    for row in g.chunks(f) {
                        add_into(gb, row);
                    }
                }
                if let Some(gw) = self.acc(grads, *weight) {
                    for bi in 0..b {
                        for tt in 0..t_out {
                            let start = (bi * t + tt) * c;
                            let win = &ti.data()[start..start + window];
                            let grow = &g[(bi * t_out + tt) * f..(bi * t_out + tt + 1) * f];
                            for (fi, &gv) in grow.iter().enumerate() {
                                for (o, &xv) in gw[fi * window..(fi + 1) * window].iter_mut().zip(win) {
                                    *o += gv * xv;
                                }
                            }
                        }
                    }
                }
                if let Some(gi) = self.acc(grads, *input) {
                    for bi in 0..b {
                        for tt in 0..t_out {
                            let start = (bi * t + tt) * c;
                            let grow = &g[(bi * t_out + tt) * f..(bi * t_out + tt + 1) * f];
                            let win = &mut gi[start..start + window];
                            for (fi, &gv) in grow.iter().enumerate() {
                                for (o, &wv) in win.iter_mut().zip(&tw.data()[fi * window..(fi + 1) * window]) {
                                    *o += gv * wv;
                                }
                            }
                        }
                    }
                }
            }
            Op::MaxPoolTime(input, argmax) => {
                if let Some(gi) = self.acc(grads, *input) {
                    for (&src, &x) in argmax.iter().zip(g) {
                        gi[src] += x;
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::Mean(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    let s = g[0] / T::from_usize(ga.len()).expect("len fits");
                    for o in ga.iter_mut() {
                        *o += s;
                    }
                }
            }
            Op::Bce {
                probs,
                targets,
                scale,
                eps,
            } => {
                let tp = self.value(*probs);
                if let Some(gp) = self.acc(grads, *probs) {
                    let hi = T::one() - *eps;
                    for ((o, &p), &y) in gp.iter_mut().zip(tp.data()).zip(targets) {
                        // clamp has zero derivative outside [eps, 1-eps]
                        if p < *eps || p > hi {
                            continue;
                        }
                        let d = -y / p + (T::one() - y) / (T::one() - p);
                        *o += g[0] * *scale * d;
                    }
                }
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (o, &x) in dst.iter_mut().zip(src) {
        *o += x;
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// NaN probabilities stay NaN; `Float::max` alone would clamp them to `eps`.
pub(crate) fn bce_term<T: Real>(p: T, y: T, eps: T) -> T {
    if p.is_nan() {
        return p;
    }
    let p = p.max(eps).min(T::one() - eps);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `v`, or `None` if `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v` shaped like its value, zero-filled when `v` does not reach the loss.
    pub fn get_or_zeros(&self, tape: &Tape<'_, T>, v: Var) -> Tensor<T> {
        let shape = tape.value(v).shape().to_vec();
        match self.get(v) {
            Some(g) => Tensor::from_parts(shape, g.to_vec()),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
