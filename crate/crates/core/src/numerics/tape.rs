//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value. Nodes whose inputs do
//! not require gradients are stored as constants, so only the differentiable
//! part of the graph carries backward rules. Inputs always precede outputs,
//! which makes a reverse sweep over the node list a valid topological order.

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Validity mask over the last axis of a tensor whose leading axis is the batch.
///
/// `valid[b * width + j]` says whether column `j` of every row belonging to
/// batch entry `b` takes part in a masked softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    batch: usize,
    width: usize,
    valid: Vec<bool>,
}

impl Mask {
    pub fn new(batch: usize, width: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != batch * width {
            return Err(Error::Shape { op: "mask", shapes: vec![vec![batch, width], vec![valid.len()]] });
        }
        Ok(Mask { batch, width, valid })
    }

    /// Prefix mask: the first `lengths[b]` positions of entry `b` are valid.
    pub fn from_lengths(lengths: &[usize], width: usize) -> Result<Self> {
        let mut valid = vec![false; lengths.len() * width];
        for (b, &len) in lengths.iter().enumerate() {
            if len > width {
                return Err(Error::invalid(format!("length {len} exceeds width {width}")));
            }
            valid[b * width..b * width + len].iter_mut().for_each(|v| *v = true);
        }
        Ok(Mask { batch: lengths.len(), width, valid })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_valid(&self, b: usize, j: usize) -> bool {
        self.valid[b * self.width + j]
    }

    /// Column `j` of the mask, one flag per batch entry.
    pub fn column(&self, j: usize) -> Vec<bool> {
        (0..self.batch).map(|b| self.is_valid(b, j)).collect()
    }
}

/// Train/eval switch for stochastic ops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Concat { inputs: Vec<Var> },
    Softmax { x: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Dropout { x: Var, scale: Vec<f64> },
    SumAxis { x: Var, axis: usize },
    Scale { x: Var, factor: f64 },
    Shift { x: Var },
    Ln { x: Var, floor: f64 },
    Gather { table: Var, ids: Vec<usize>, frozen_row: Option<usize> },
    Select { x: Var, index: usize },
    Stack { inputs: Vec<Var> },
    Reshape { x: Var },
    Blend { cond: Vec<bool>, a: Var, b: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Recorded computation plus accumulated gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        Ok(self.push_raw(value, requires_grad, Op::Leaf))
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v`; zeros when nothing reached it.
    pub fn grad(&self, v: Var) -> Tensor {
        let value = &self.nodes[v.0].value;
        match &self.grads[v.0] {
            Some(g) => Tensor::new(value.shape().to_vec(), g.clone()).expect("grad shape"),
            None => Tensor::zeros(value.shape()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push_raw(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, requires_grad, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, inputs: &[Var], op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, requires_grad, op))
    }

    fn shape_err(&self, op: &'static str, vars: &[Var]) -> Error {
        Error::Shape { op, shapes: vars.iter().map(|v| self.shape(*v).to_vec()).collect() }
    }

    // ------------------------------------------------------------------
    // forward ops
    // ------------------------------------------------------------------

    /// Matrix product over the last two axes.
    ///
    /// Supported layouts: `[m,k]·[k,n]`, `[B,m,k]·[k,n]` (shared right
    /// operand) and `[B,m,k]·[B,k,n]`. With `trans_b` the right operand is
    /// stored transposed (`[n,k]` or `[B,n,k]`).
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let geom = self.matmul_geometry(a, b, trans_b)?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; geom.batch * geom.m * geom.n];
        for bi in 0..geom.batch {
            let a_blk = &av[bi * geom.m * geom.k..(bi + 1) * geom.m * geom.k];
            let b_blk = if geom.shared_b { bv } else { &bv[bi * geom.k * geom.n..(bi + 1) * geom.k * geom.n] };
            let o_blk = &mut out[bi * geom.m * geom.n..(bi + 1) * geom.m * geom.n];
            gemm(geom.m, geom.k, geom.n, a_blk, false, b_blk, trans_b, o_blk);
        }
        let mut shape = self.shape(a).to_vec();
        *shape.last_mut().unwrap() = geom.n;
        let value = Tensor::new(shape, out)?;
        self.push("matmul", value, &[a, b], Op::MatMul { a, b, trans_b })
    }

    fn matmul_geometry(&self, a: Var, b: Var, trans_b: bool) -> Result<MatMulGeometry> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let err = || self.shape_err("matmul", &[a, b]);
        let (batch, m, k) = match sa.len() {
            2 => (1, sa[0], sa[1]),
            3 => (sa[0], sa[1], sa[2]),
            _ => return Err(err()),
        };
        let (shared_b, kb, n) = match (sa.len(), sb.len()) {
            (_, 2) => {
                let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
                (true, kb, n)
            }
            (3, 3) if sb[0] == batch => {
                let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
                (false, kb, n)
            }
            _ => return Err(err()),
        };
        if kb != k {
            return Err(err());
        }
        // a shared right operand lets the batch fold into the row count
        let (batch, m) = if shared_b { (1, batch * m) } else { (batch, m) };
        Ok(MatMulGeometry { batch, m, k, n, shared_b })
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Broadcast)> {
        let bc = Broadcast::new(self.shape(a), self.shape(b)).ok_or_else(|| self.shape_err(name, &[a, b]))?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let data: Vec<f64> = (0..bc.len()).map(|i| f(av[bc.a_index(i)], bv[bc.b_index(i)])).collect();
        Ok((Tensor::new(bc.shape.clone(), data)?, bc))
    }

    /// Elementwise sum with right-aligned broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, _) = self.binary("add", a, b, |x, y| x + y)?;
        self.push("add", value, &[a, b], Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, _) = self.binary("sub", a, b, |x, y| x - y)?;
        self.push("sub", value, &[a, b], Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, _) = self.binary("mul", a, b, |x, y| x * y)?;
        self.push("mul", value, &[a, b], Op::Mul { a, b })
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let lead = &self.shape(first)[..self.shape(first).len() - 1];
        let rows: usize = lead.iter().product();
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != lead.len() + 1 || &s[..s.len() - 1] != lead {
                return Err(self.shape_err("concat", inputs));
            }
            total += s[s.len() - 1];
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &v in inputs {
                let t = self.value(v);
                let w = t.shape()[t.rank() - 1];
                data.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        self.push("concat", value, inputs, Op::Concat { inputs: inputs.to_vec() })
    }

    /// Softmax over the last axis, optionally restricted to the valid columns
    /// of `mask`. Masked entries come out as exactly zero.
    pub fn softmax(&mut self, x: Var, mask: Option<&Mask>) -> Result<Var> {
        let t = self.value(x);
        let width = *t.shape().last().ok_or_else(|| self.shape_err("softmax", &[x]))?;
        let rows = t.numel() / width;
        let rows_per_batch = match mask {
            Some(m) => {
                if t.rank() < 2 || t.shape()[0] != m.batch || width != m.width {
                    return Err(Error::Shape {
                        op: "softmax",
                        shapes: vec![t.shape().to_vec(), vec![m.batch, m.width]],
                    });
                }
                rows / m.batch
            }
            None => rows,
        };
        let mut out = vec![0.0; t.numel()];
        for r in 0..rows {
            let src = &t.data()[r * width..(r + 1) * width];
            let dst = &mut out[r * width..(r + 1) * width];
            let b = r / rows_per_batch;
            let valid = |j: usize| mask.is_none_or(|m| m.is_valid(b, j));
            let max = (0..width).filter(|&j| valid(j)).map(|j| src[j]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::invalid("softmax: every position of a row is masked"));
            }
            let mut sum = 0.0;
            for j in 0..width {
                if valid(j) {
                    dst[j] = (src[j] - max).exp();
                    sum += dst[j];
                }
            }
            dst.iter_mut().for_each(|v| *v /= sum);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push("softmax", value, &[x], Op::Softmax { x })
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.push(name, value, &[x], op)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, f64::tanh, Op::Tanh { x })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.unary("scale", x, |v| v * factor, Op::Scale { x, factor })
    }

    /// Adds a constant to every entry.
    pub fn shift(&mut self, x: Var, offset: f64) -> Result<Var> {
        self.unary("shift", x, |v| v + offset, Op::Shift { x })
    }

    /// Natural log with the argument clamped from below at `floor`.
    pub fn ln(&mut self, x: Var, floor: f64) -> Result<Var> {
        if floor <= 0.0 {
            return Err(Error::invalid("ln: floor must be positive"));
        }
        self.unary("ln", x, |v| v.max(floor).ln(), Op::Ln { x, floor })
    }

    /// Inverted dropout: kept entries are scaled by `1/(1-rate)` so eval mode
    /// is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0,1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let t = self.value(x);
        let scale: Vec<f64> = (0..t.numel()).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
        let data = t.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.push("dropout", value, &[x], Op::Dropout { x, scale })
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(self.shape_err("sum_axis", &[x]));
        }
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &t.data()[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = t.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        self.push("sum_axis", value, &[x], Op::SumAxis { x, axis })
    }

    /// Sum of every entry as a rank-0 tensor.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let flat = self.reshape(x, vec![n])?;
        self.sum_axis(flat, 0)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::Shape { op: "reshape", shapes: vec![t.shape().to_vec(), shape] });
        }
        let value = t.clone().reshaped(shape);
        self.push("reshape", value, &[x], Op::Reshape { x })
    }

    /// Row lookup: `ids` index rows of a 2-D `table`; the result has shape
    /// `prefix ++ [cols]`. `frozen_row` never receives gradient.
    pub fn gather(&mut self, table: Var, ids: &[usize], prefix: &[usize], frozen_row: Option<usize>) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 || prefix.iter().product::<usize>() != ids.len() {
            return Err(Error::Shape { op: "gather", shapes: vec![t.shape().to_vec(), prefix.to_vec()] });
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::invalid(format!("gather: id {id} out of range for {rows} rows")));
            }
            data.extend_from_slice(t.row(id));
        }
        let mut shape = prefix.to_vec();
        shape.push(cols);
        let value = Tensor::new(shape, data)?;
        self.push("gather", value, &[table], Op::Gather { table, ids: ids.to_vec(), frozen_row })
    }

    /// `x[:, index, :]` for a rank-3 tensor.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 3 || index >= t.shape()[1] {
            return Err(self.shape_err("select", &[x]));
        }
        let (b, l, d) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        let mut data = Vec::with_capacity(b * d);
        for bi in 0..b {
            data.extend_from_slice(&t.data()[(bi * l + index) * d..(bi * l + index + 1) * d]);
        }
        let value = Tensor::new(vec![b, d], data)?;
        self.push("select", value, &[x], Op::Select { x, index })
    }

    /// Stacks rank-2 `[B,d]` tensors into `[B,n,d]`.
    pub fn stack(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| Error::invalid("stack of zero tensors"))?;
        let s0 = self.shape(first).to_vec();
        if s0.len() != 2 || inputs.iter().any(|&v| self.shape(v) != s0.as_slice()) {
            return Err(self.shape_err("stack", inputs));
        }
        let (b, d, n) = (s0[0], s0[1], inputs.len());
        let mut data = vec![0.0; b * n * d];
        for (t, &v) in inputs.iter().enumerate() {
            let src = self.value(v).data();
            for bi in 0..b {
                data[(bi * n + t) * d..(bi * n + t + 1) * d].copy_from_slice(&src[bi * d..(bi + 1) * d]);
            }
        }
        let value = Tensor::new(vec![b, n, d], data)?;
        self.push("stack", value, inputs, Op::Stack { inputs: inputs.to_vec() })
    }

    /// Row-wise select between two equally shaped rank-2 tensors: row `r` of
    /// the result is row `r` of `a` when `cond[r]`, otherwise of `b`.
    pub fn blend(&mut self, cond: &[bool], a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        if sa.len() != 2 || sa != self.shape(b) || cond.len() != sa[0] {
            return Err(self.shape_err("blend", &[a, b]));
        }
        let d = sa[1];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(av.len());
        for (r, &c) in cond.iter().enumerate() {
            let src = if c { av } else { bv };
            data.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let value = Tensor::new(sa.to_vec(), data)?;
        self.push("blend", value, &[a, b], Op::Blend { cond: cond.to_vec(), a, b })
    }

    // ------------------------------------------------------------------
    // backward
    // ------------------------------------------------------------------

    /// Reverse sweep from a scalar `loss`. Gradients add onto whatever is
    /// already stored, so two calls without [`Tape::zero_grad`] double them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("backward on an empty tape"));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape { op: "backward", shapes: vec![self.shape(loss).to_vec()] });
        }
        let mut local: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = local[i].take() else { continue };
            self.propagate(i, &g, &mut local);
            accumulate(&mut self.grads[i], &g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], local: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let geom = self.matmul_geometry(*a, *b, *trans_b).expect("recorded matmul geometry");
                let (m, k, n) = (geom.m, geom.k, geom.n);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if needs(a) {
                    let ga = slot(local, *a, av.len());
                    for bi in 0..geom.batch {
                        let b_blk = if geom.shared_b { bv } else { &bv[bi * k * n..(bi + 1) * k * n] };
                        // dA = dC · op(B)^T
                        gemm(m, n, k, &g[bi * m * n..(bi + 1) * m * n], false, b_blk, !trans_b, &mut ga[bi * m * k..(bi + 1) * m * k]);
                    }
                }
                if needs(b) {
                    let gb = slot(local, *b, bv.len());
                    for bi in 0..geom.batch {
                        let a_blk = &av[bi * m * k..(bi + 1) * m * k];
                        let g_blk = &g[bi * m * n..(bi + 1) * m * n];
                        let gb_blk = if geom.shared_b { &mut gb[..] } else { &mut gb[bi * k * n..(bi + 1) * k * n] };
                        if *trans_b {
                            // d(B^T) = dC^T · A, shape [n,k]
                            gemm(n, m, k, g_blk, true, a_blk, false, gb_blk);
                        } else {
                            // dB = A^T · dC, shape [k,n]
                            gemm(k, m, n, a_blk, true, g_blk, false, gb_blk);
                        }
                    }
                }
            }
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => {
                let bc = Broadcast::new(self.shape(*a), self.shape(*b)).expect("recorded broadcast");
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let sign = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
                let is_mul = matches!(node.op, Op::Mul { .. });
                if needs(a) {
                    let ga = slot(local, *a, av.len());
                    for (o, &go) in g.iter().enumerate() {
                        let d = if is_mul { go * bv[bc.b_index(o)] } else { go };
                        ga[bc.a_index(o)] += d;
                    }
                }
                if needs(b) {
                    let gb = slot(local, *b, bv.len());
                    for (o, &go) in g.iter().enumerate() {
                        let d = if is_mul { go * av[bc.a_index(o)] } else { sign * go };
                        gb[bc.b_index(o)] += d;
                    }
                }
            }
            Op::Concat { inputs } => {
                let total = *node.value.shape().last().unwrap();
                let rows = node.value.numel() / total;
                let mut offset = 0;
                for v in inputs {
                    let w = *self.shape(*v).last().unwrap();
                    if needs(v) {
                        let gv = slot(local, *v, rows * w);
                        for r in 0..rows {
                            for j in 0..w {
                                gv[r * w + j] += g[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Softmax { x } => {
                let y = node.value.data();
                let width = *node.value.shape().last().unwrap();
                let gx = slot(local, *x, y.len());
                for r in 0..y.len() / width {
                    let yr = &y[r * width..(r + 1) * width];
                    let gr = &g[r * width..(r + 1) * width];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..width {
                        gx[r * width + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                let gx = slot(local, *x, xv.len());
                for ((d, &xi), &gi) in gx.iter_mut().zip(xv).zip(g) {
                    if xi > 0.0 {
                        *d += gi;
                    }
                }
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                let gx = slot(local, *x, y.len());
                for ((d, &yi), &gi) in gx.iter_mut().zip(y).zip(g) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
            Op::Tanh { x } => {
                let y = node.value.data();
                let gx = slot(local, *x, y.len());
                for ((d, &yi), &gi) in gx.iter_mut().zip(y).zip(g) {
                    *d += gi * (1.0 - yi * yi);
                }
            }
            Op::Dropout { x, scale } => {
                let gx = slot(local, *x, scale.len());
                for ((d, &s), &gi) in gx.iter_mut().zip(scale).zip(g) {
                    *d += gi * s;
                }
            }
            Op::SumAxis { x, axis } => {
                let xs = self.shape(*x);
                let (outer, len, inner) = split_axis(xs, *axis);
                let gx = slot(local, *x, outer * len * inner);
                for o in 0..outer {
                    for a in 0..len {
                        for j in 0..inner {
                            gx[(o * len + a) * inner + j] += g[o * inner + j];
                        }
                    }
                }
            }
            Op::Scale { x, factor } => {
                let gx = slot(local, *x, g.len());
                for (d, &gi) in gx.iter_mut().zip(g) {
                    *d += gi * factor;
                }
            }
            Op::Shift { x } | Op::Reshape { x } => {
                let gx = slot(local, *x, g.len());
                for (d, &gi) in gx.iter_mut().zip(g) {
                    *d += gi;
                }
            }
            Op::Ln { x, floor } => {
                let xv = self.value(*x).data();
                let gx = slot(local, *x, xv.len());
                for ((d, &xi), &gi) in gx.iter_mut().zip(xv).zip(g) {
                    if xi > *floor {
                        *d += gi / xi;
                    }
                }
            }
            Op::Gather { table, ids, frozen_row } => {
                let t = self.value(*table);
                let cols = t.shape()[1];
                let gt = slot(local, *table, t.numel());
                for (p, &id) in ids.iter().enumerate() {
                    if Some(id) == *frozen_row {
                        continue;
                    }
                    for j in 0..cols {
                        gt[id * cols + j] += g[p * cols + j];
                    }
                }
            }
            Op::Select { x, index } => {
                let xs = self.shape(*x);
                let (b, l, d) = (xs[0], xs[1], xs[2]);
                let gx = slot(local, *x, b * l * d);
                for bi in 0..b {
                    for j in 0..d {
                        gx[(bi * l + index) * d + j] += g[bi * d + j];
                    }
                }
            }
            Op::Stack { inputs } => {
                let s = node.value.shape();
                let (b, n, d) = (s[0], s[1], s[2]);
                for (t, v) in inputs.iter().enumerate() {
                    if !needs(v) {
                        continue;
                    }
                    let gv = slot(local, *v, b * d);
                    for bi in 0..b {
                        for j in 0..d {
                            gv[bi * d + j] += g[(bi * n + t) * d + j];
                        }
                    }
                }
            }
            Op::Blend { cond, a, b } => {
                let d = node.value.shape()[1];
                for (which, v) in [(true, a), (false, b)] {
                    if !needs(v) {
                        continue;
                    }
                    let gv = slot(local, *v, g.len());
                    for (r, &c) in cond.iter().enumerate() {
                        if c == which {
                            for j in 0..d {
                                gv[r * d + j] += g[r * d + j];
                            }
                        }
                    }
                }
            }
        }
    }
}

struct MatMulGeometry {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    shared_b: bool,
}

fn slot(local: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    local[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(dst: &mut Option<Vec<f64>>, g: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *dst = Some(g.to_vec()),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `out += op(a) · op(b)` where `op(a)` is `m×k` and `op(b)` is `k×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], trans_a: bool, b: &[f64], trans_b: bool, out: &mut [f64]) {
    let a_at = |i: usize, p: usize| if trans_a { a[p * m + i] } else { a[i * k + p] };
    if trans_b {
        for i in 0..m {
            for j in 0..n {
                let row = &b[j * k..(j + 1) * k];
                let mut s = 0.0;
                for (p, &bv) in row.iter().enumerate() {
                    s += a_at(i, p) * bv;
                }
                out[i * n + j] += s;
            }
        }
    } else {
        for i in 0..m {
            let o = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a_at(i, p);
                for (d, &bv) in o.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *d += av * bv;
                }
            }
        }
    }
}

/// Right-aligned broadcasting between two shapes.
struct Broadcast {
    shape: Vec<usize>,
    a_offsets: Option<Vec<usize>>,
    b_offsets: Option<Vec<usize>>,
}

impl Broadcast {
    fn new(a: &[usize], b: &[usize]) -> Option<Self> {
        if a == b {
            return Some(Broadcast { shape: a.to_vec(), a_offsets: None, b_offsets: None });
        }
        let rank = a.len().max(b.len());
        let dim = |s: &[usize], i: usize| if i + s.len() < rank { 1 } else { s[i + s.len() - rank] };
        let mut shape = Vec::with_capacity(rank);
        for i in 0..rank {
            let (da, db) = (dim(a, i), dim(b, i));
            if da != db && da != 1 && db != 1 {
                return None;
            }
            shape.push(da.max(db));
        }
        let a_offsets = (a != shape.as_slice()).then(|| offsets(&shape, a));
        let b_offsets = (b != shape.as_slice()).then(|| offsets(&shape, b));
        Some(Broadcast { shape, a_offsets, b_offsets })
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn a_index(&self, o: usize) -> usize {
        self.a_offsets.as_ref().map_or(o, |v| v[o])
    }

    fn b_index(&self, o: usize) -> usize {
        self.b_offsets.as_ref().map_or(o, |v| v[o])
    }
}

fn offsets(out: &[usize], input: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        let k = i as isize - (rank - input.len()) as isize;
        if k >= 0 {
            let d = input[k as usize];
            strides[i] = if d == 1 { 0 } else { acc };
            acc *= d;
        }
    }
    let n: usize = out.iter().product();
    let mut result = Vec::with_capacity(n);
    let mut idx = vec![0; rank];
    let mut off = 0;
    for _ in 0..n {
        result.push(off);
        for i in (0..rank).rev() {
            idx[i] += 1;
            off += strides[i];
            if idx[i] < out[i] {
                break;
            }
            off -= strides[i] * out[i];
            idx[i] = 0;
        }
    }
    result
}
