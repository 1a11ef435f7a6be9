use super::{AdError, Tensor};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Which operand of a binary op, if any, is repeated across rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    None,
    Left,
    Right,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Div(Var, Var, Broadcast),
    Minimum(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Sqrt(Var),
    Relu(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Minimum(..) => "minimum",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Concat(..) => "concat",
            Op::Slice(..) => "slice",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Softplus(..) => "softplus",
            Op::Sqrt(..) => "sqrt",
            Op::Relu(..) => "relu",
            Op::Square(..) => "square",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumCols(..) => "sum_cols",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode gradient tape.
///
/// Nodes are appended in creation order, which is also a valid topological
/// order; [`Tape::backward`] walks them in reverse. A tape is rebuilt for
/// every forward pass and is not `Sync`-shared between threads.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Trainable leaf. Gradients are accumulated for it on `backward`.
    pub fn param(&mut self, t: Tensor) -> Result<Var, AdError> {
        self.leaf(t, true)
    }

    /// Leaf that never receives a gradient (data, noise, masks).
    pub fn constant(&mut self, t: Tensor) -> Result<Var, AdError> {
        self.leaf(t, false)
    }

    fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Result<Var, AdError> {
        if !t.is_finite() {
            return Err(AdError::NonFinite { op: "leaf" });
        }
        Ok(self.push(t, Op::Leaf, requires_grad))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn record(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Result<Var, AdError> {
        if !value.is_finite() {
            return Err(AdError::NonFinite { op: op.name() });
        }
        let rg = parents.iter().any(|&p| self.needs(p));
        Ok(self.push(value, op, rg))
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<(Vec<usize>, Broadcast), AdError> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.shape() == tb.shape() {
            return Ok((ta.shape().to_vec(), Broadcast::None));
        }
        if ta.cols() == tb.cols() {
            if tb.rows() == 1 {
                return Ok((ta.shape().to_vec(), Broadcast::Right));
            }
            if ta.rows() == 1 {
                return Ok((tb.shape().to_vec(), Broadcast::Left));
            }
        }
        Err(AdError::shape(op, ta.shape(), tb.shape()))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(Var, Var, Broadcast) -> Op,
    ) -> Result<Var, AdError> {
        let (shape, bc) = self.broadcast(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b);
        let cols = ta.cols().max(tb.cols());
        let n: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let data: Vec<f64> = match bc {
            Broadcast::None => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Right => (0..n).map(|i| f(da[i], db[i % cols])).collect(),
            Broadcast::Left => (0..n).map(|i| f(da[i % cols], db[i])).collect(),
        };
        let value = Tensor::new(shape, data)?;
        self.record(value, make(a, b, bc), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary("minimum", a, b, f64::min, Op::Minimum)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var, AdError> {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x * k).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.record(value, Op::Scale(a, k), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AdError> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var, AdError> {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x + k).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.record(value, Op::AddScalar(a), &[a])
    }

    /// `[.., k] x [k, m] -> [.., m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.shape().is_empty() || tb.shape().len() != 2 || ta.cols() != tb.shape()[0] {
            return Err(AdError::shape("matmul", ta.shape(), tb.shape()));
        }
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; n * m];
        matmul_into(ta.data(), tb.data(), &mut out, n, k, m);
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        let value = Tensor::new(shape, out)?;
        self.record(value, Op::MatMul(a, b), &[a, b])
    }

    /// Concatenates along the last axis. Every part must have the same rows.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        let first = *parts.first().ok_or(AdError::Empty("concat"))?;
        let rows = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows || t.shape().is_empty() {
                return Err(AdError::shape("concat", self.value(first).shape(), t.shape()));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = self.value(first).shape().to_vec();
        *shape.last_mut().unwrap() = total;
        let value = Tensor::new(shape, data)?;
        self.record(value, Op::Concat(parts.to_vec()), parts)
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AdError> {
        let t = self.value(a);
        if t.shape().is_empty() || start >= end || end > t.cols() {
            return Err(AdError::Slice {
                shape: t.shape().to_vec(),
                start,
                end,
            });
        }
        let rows = t.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = end - start;
        let value = Tensor::new(shape, data)?;
        self.record(value, Op::Slice(a, start), &[a])
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, AdError> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.record(value, op, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// Square root. The derivative at exactly 0 is taken as 0, so norms of
    /// zero vectors contribute no gradient instead of an infinite one.
    pub fn sqrt(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    /// Positive part `max(x, 0)`; subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AdError> {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// `max(a, floor)` built from primitives.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var, AdError> {
        let shifted = self.add_scalar(a, -floor)?;
        let pos = self.relu(shifted)?;
        self.add_scalar(pos, floor)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AdError> {
        let s = self.value(a).data().iter().sum();
        self.record(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        if t.numel() == 0 {
            return Err(AdError::Empty("mean"));
        }
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.record(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Sum over the last axis, keeping it as width 1.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, AdError> {
        let t = self.value(a);
        if t.shape().is_empty() {
            return Err(AdError::shape("sum_cols", t.shape(), &[]));
        }
        let data = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = 1;
        let value = Tensor::new(shape, data)?;
        self.record(value, Op::SumCols(a), &[a])
    }

    /// Gradient of the last `backward` target with respect to `v`; zeros if
    /// `v` was unreachable.
    pub fn grad(&self, v: Var) -> Tensor {
        let shape = self.value(v).shape().to_vec();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient length"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn backward(&mut self, loss: Var) -> Result<(), AdError> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(AdError::NonScalarLoss(lt.shape().to_vec()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // Split borrows: nodes are read-only here, grads are written.
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let out = node.value.data();
        let val = |v: Var| nodes[v.0].value.data();
        let need = |v: Var| nodes[v.0].requires_grad;
        let len = |v: Var| nodes[v.0].value.numel();
        let cols = node.value.cols();

        // Routes an output-shaped gradient into an operand that may have been
        // broadcast across rows.
        let route = |grads: &mut Vec<Option<Vec<f64>>>, v: Var, bcast: bool, f: &dyn Fn(usize) -> f64| {
            let n = len(v);
            let dst = accumulate(&mut grads[v.0], n);
            if bcast {
                for k in 0..g.len() {
                    dst[k % cols] += f(k);
                }
            } else {
                for (k, d) in dst.iter_mut().enumerate() {
                    *d += f(k);
                }
            }
        };
        let idx = |bcast: bool, k: usize| if bcast { k % cols } else { k };

        match node.op {
            Op::Leaf => {}
            Op::Add(a, b, bc) => {
                if need(a) {
                    route(grads, a, bc == Broadcast::Left, &|k| g[k]);
                }
                if need(b) {
                    route(grads, b, bc == Broadcast::Right, &|k| g[k]);
                }
            }
            Op::Sub(a, b, bc) => {
                if need(a) {
                    route(grads, a, bc == Broadcast::Left, &|k| g[k]);
                }
                if need(b) {
                    route(grads, b, bc == Broadcast::Right, &|k| -g[k]);
                }
            }
            Op::Mul(a, b, bc) => {
                let (la, lb) = (bc == Broadcast::Left, bc == Broadcast::Right);
                let (va, vb) = (val(a), val(b));
                if need(a) {
                    route(grads, a, la, &|k| g[k] * vb[idx(lb, k)]);
                }
                if need(b) {
                    route(grads, b, lb, &|k| g[k] * va[idx(la, k)]);
                }
            }
            Op::Div(a, b, bc) => {
                let (la, lb) = (bc == Broadcast::Left, bc == Broadcast::Right);
                let (va, vb) = (val(a), val(b));
                if need(a) {
                    route(grads, a, la, &|k| g[k] / vb[idx(lb, k)]);
                }
                if need(b) {
                    route(grads, b, lb, &|k| {
                        let d = vb[idx(lb, k)];
                        -g[k] * va[idx(la, k)] / (d * d)
                    });
                }
            }
            Op::Minimum(a, b, bc) => {
                let (la, lb) = (bc == Broadcast::Left, bc == Broadcast::Right);
                let (va, vb) = (val(a), val(b));
                if need(a) {
                    route(grads, a, la, &|k| if va[idx(la, k)] <= vb[idx(lb, k)] { g[k] } else { 0.0 });
                }
                if need(b) {
                    route(grads, b, lb, &|k| if va[idx(la, k)] <= vb[idx(lb, k)] { 0.0 } else { g[k] });
                }
            }
            Op::Scale(a, s) => route(grads, a, false, &|k| g[k] * s),
            Op::AddScalar(a) => route(grads, a, false, &|k| g[k]),
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                if need(a) {
                    // dA = G * B^T
                    let dst = accumulate(&mut grads[a.0], n * k);
                    let bd = tb.data();
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        let drow = &mut dst[r * k..(r + 1) * k];
                        for (kk, d) in drow.iter_mut().enumerate() {
                            let brow = &bd[kk * m..(kk + 1) * m];
                            *d += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if need(b) {
                    // dB = A^T * G
                    let dst = accumulate(&mut grads[b.0], k * m);
                    let ad = ta.data();
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for kk in 0..k {
                            let x = ad[r * k + kk];
                            if x == 0.0 {
                                continue;
                            }
                            let drow = &mut dst[kk * m..(kk + 1) * m];
                            for (d, gv) in drow.iter_mut().zip(grow) {
                                *d += x * gv;
                            }
                        }
                    }
                }
            }
            Op::Concat(ref parts) => {
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = nodes[p.0].value.cols();
                    if need(p) {
                        let dst = accumulate(&mut grads[p.0], rows * pc);
                        for r in 0..rows {
                            for c in 0..pc {
                                dst[r * pc + c] += g[r * cols + offset + c];
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::Slice(a, start) => {
                let ac = nodes[a.0].value.cols();
                let rows = node.value.rows();
                let dst = accumulate(&mut grads[a.0], rows * ac);
                for r in 0..rows {
                    for c in 0..cols {
                        dst[r * ac + start + c] += g[r * cols + c];
                    }
                }
            }
            Op::Tanh(a) => route(grads, a, false, &|k| g[k] * (1.0 - out[k] * out[k])),
            Op::Sigmoid(a) => route(grads, a, false, &|k| g[k] * out[k] * (1.0 - out[k])),
            Op::Exp(a) => route(grads, a, false, &|k| g[k] * out[k]),
            Op::Log(a) => {
                let va = val(a);
                route(grads, a, false, &|k| g[k] / va[k])
            }
            Op::Softplus(a) => {
                let va = val(a);
                route(grads, a, false, &|k| g[k] * sigmoid(va[k]))
            }
            Op::Sqrt(a) => route(grads, a, false, &|k| {
                if out[k] > 0.0 {
                    g[k] * 0.5 / out[k]
                } else {
                    0.0
                }
            }),
            Op::Relu(a) => {
                let va = val(a);
                route(grads, a, false, &|k| if va[k] > 0.0 { g[k] } else { 0.0 })
            }
            Op::Square(a) => {
                let va = val(a);
                route(grads, a, false, &|k| g[k] * 2.0 * va[k])
            }
            Op::Sum(a) => {
                let n = len(a);
                let dst = accumulate(&mut grads[a.0], n);
                dst.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(a) => {
                let n = len(a);
                let dst = accumulate(&mut grads[a.0], n);
                let s = g[0] / n as f64;
                dst.iter_mut().for_each(|d| *d += s);
            }
            Op::SumCols(a) => {
                let ac = nodes[a.0].value.cols();
                let n = len(a);
                let dst = accumulate(&mut grads[a.0], n);
                for (k, d) in dst.iter_mut().enumerate() {
                    *d += g[k / ac];
                }
            }
        }
    }
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for r in 0..n {
        let orow = &mut out[r * m..(r + 1) * m];
        for kk in 0..k {
            let x = a[r * k + kk];
            if x == 0.0 {
                continue;
            }
            let brow = &b[kk * m..(kk + 1) * m];
            for (o, y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
}
