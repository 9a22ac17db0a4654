//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive evaluates eagerly and appends a node holding its value and
//! operands. Nodes are appended in evaluation order, so walking the tape from
//! the loss back to the first node visits every node after all of its
//! consumers.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::numeric::ExactSum;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rhs is a single row repeated over lhs rows.
    RhsRows,
    /// lhs is a single row repeated over rhs rows.
    LhsRows,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Square(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    BroadcastRows(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of evaluated primitives.
///
/// A tape is single-threaded; build one per sample and reduce the resulting
/// gradients afterwards.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `a[n,k] · b[k,m]`; a 1-D `b` is treated as a column and yields a 1-D result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().is_empty() || bv.shape().len() > 2 {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let (n, k) = (av.shape()[0], av.shape()[1]);
        let (kb, m) = if bv.shape().len() == 1 {
            (bv.shape()[0], 1)
        } else {
            (bv.shape()[0], bv.shape()[1])
        };
        if k != kb {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, av.data(), (k as isize, 1), bv.data(), (m as isize, 1), 0.0, &mut out);
        let shape = if bv.shape().len() == 1 { vec![n] } else { vec![n, m] };
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b)))
    }

    /// Affine map `x · wᵀ + b` applied to every row of `x`, with `w` of shape `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape().len() != 2 || xv.shape().is_empty() || wv.shape()[1] != xv.cols() {
            return Err(Error::shape("linear", wv.shape(), xv.shape()));
        }
        let (out_dim, in_dim) = (wv.shape()[0], wv.shape()[1]);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.numel() != out_dim {
                return Err(Error::shape("linear(bias)", wv.shape(), bv.shape()));
            }
        }
        let n = xv.rows();
        let mut out = vec![0.0; n * out_dim];
        gemm(
            n,
            in_dim,
            out_dim,
            xv.data(),
            (in_dim as isize, 1),
            wv.data(),
            (1, in_dim as isize),
            0.0,
            &mut out,
        );
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(out_dim) {
                for (o, bi) in row.iter_mut().zip(bv) {
                    *o += bi;
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = out_dim;
        Ok(self.push(Tensor::from_parts(shape, out), Op::Linear { x, w, b }))
    }

    fn broadcast_kind(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() == bv.shape() {
            Ok(Broadcast::Same)
        } else if av.cols() == bv.cols() && bv.rows() == 1 {
            Ok(Broadcast::RhsRows)
        } else if av.cols() == bv.cols() && av.rows() == 1 {
            Ok(Broadcast::LhsRows)
        } else {
            Err(Error::shape(op, av.shape(), bv.shape()))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(Var, Var, Broadcast) -> Op,
    ) -> Result<Var> {
        let kind = self.broadcast_kind(name, a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let value = match kind {
            Broadcast::Same => Tensor::from_parts(
                av.shape().to_vec(),
                av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
            ),
            Broadcast::RhsRows => {
                let c = av.cols();
                let data = av
                    .data()
                    .chunks(c)
                    .flat_map(|row| row.iter().zip(bv.data()).map(|(&x, &y)| f(x, y)))
                    .collect();
                Tensor::from_parts(av.shape().to_vec(), data)
            }
            Broadcast::LhsRows => {
                let c = bv.cols();
                let data = bv
                    .data()
                    .chunks(c)
                    .flat_map(|row| av.data().iter().zip(row).map(|(&x, &y)| f(x, y)))
                    .collect();
                Tensor::from_parts(bv.shape().to_vec(), data)
            }
        };
        Ok(self.push(value, op(a, b, kind)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Natural log; non-positive inputs are a contract violation.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Contract(format!("log of non-positive value {bad}")));
        }
        let v = self.value(a).map(f64::ln);
        Ok(self.push(v, Op::Log(a)))
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Concatenates along the last axis. Operands with a single row are
    /// repeated to match the row count of the others.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let rows = parts.iter().map(|&p| self.value(p).rows()).max().unwrap();
        let widest = *parts.iter().max_by_key(|&&p| self.value(p).rows()).unwrap();
        for &p in parts {
            let r = self.value(p).rows();
            if r != rows && r != 1 {
                return Err(Error::shape("concat", self.shape(widest), self.shape(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                let src = if v.rows() == 1 { 0 } else { r };
                data.extend_from_slice(v.row(src));
            }
        }
        let mut shape = self.shape(widest).to_vec();
        if shape.is_empty() {
            shape.push(total);
        } else {
            *shape.last_mut().unwrap() = total;
        }
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec())))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(src);
        let c = v.cols();
        if start + len > c || v.shape().is_empty() {
            return Err(Error::Contract(format!(
                "slice {start}..{} out of range for shape {:?}",
                start + len,
                v.shape()
            )));
        }
        let data = v
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = v.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Ok(self.push(Tensor::from_parts(shape, data), Op::Slice { src, start }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Column means `[n, c] → [1, c]`, exactly rounded and order independent.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let (n, c) = (v.rows(), v.cols());
        if n == 0 {
            return Err(Error::Contract("mean over zero rows".into()));
        }
        let mut out = Vec::with_capacity(c);
        for j in 0..c {
            let mut acc = ExactSum::new();
            for i in 0..n {
                acc.add(v.data()[i * c + j]);
            }
            out.push(acc.mean(n));
        }
        Ok(self.push(Tensor::from_parts(vec![1, c], out), Op::MeanRows(a)))
    }

    /// Repeats a single row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let v = self.value(a);
        if v.rows() != 1 {
            return Err(Error::shape("broadcast_rows", v.shape(), &[n, v.cols()]));
        }
        let c = v.cols();
        let data = (0..n).flat_map(|_| v.data().iter().copied()).collect();
        Ok(self.push(Tensor::from_parts(vec![n, c], data), Op::BroadcastRows(a)))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::from_parts(lv.shape().to_vec(), vec![1.0]));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (n, k) = (av.shape()[0], av.shape()[1]);
                let m = if bv.shape().len() == 1 { 1 } else { bv.shape()[1] };
                let mut da = vec![0.0; n * k];
                gemm(n, m, k, g.data(), (m as isize, 1), bv.data(), (1, m as isize), 0.0, &mut da);
                accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), da));
                let mut db = vec![0.0; k * m];
                gemm(k, n, m, av.data(), (1, k as isize), g.data(), (m as isize, 1), 0.0, &mut db);
                accumulate(grads, *b, Tensor::from_parts(bv.shape().to_vec(), db));
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (out_dim, in_dim) = (wv.shape()[0], wv.shape()[1]);
                let n = xv.rows();
                let mut dx = vec![0.0; n * in_dim];
                gemm(
                    n,
                    out_dim,
                    in_dim,
                    g.data(),
                    (out_dim as isize, 1),
                    wv.data(),
                    (in_dim as isize, 1),
                    0.0,
                    &mut dx,
                );
                accumulate(grads, *x, Tensor::from_parts(xv.shape().to_vec(), dx));
                let mut dw = vec![0.0; out_dim * in_dim];
                gemm(
                    out_dim,
                    n,
                    in_dim,
                    g.data(),
                    (1, out_dim as isize),
                    xv.data(),
                    (in_dim as isize, 1),
                    0.0,
                    &mut dw,
                );
                accumulate(grads, *w, Tensor::from_parts(wv.shape().to_vec(), dw));
                if let Some(b) = b {
                    let db = column_sums(g.data(), out_dim);
                    accumulate(grads, *b, Tensor::from_parts(val(*b).shape().to_vec(), db));
                }
            }
            Op::Add(a, b, kind) => {
                let (ga, gb) = split_broadcast(g, val(*a), val(*b), *kind, |g, _, _| (g, g));
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Sub(a, b, kind) => {
                let (ga, gb) = split_broadcast(g, val(*a), val(*b), *kind, |g, _, _| (g, -g));
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Mul(a, b, kind) => {
                let (ga, gb) =
                    split_broadcast(g, val(*a), val(*b), *kind, |g, x, y| (g * y, g * x));
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.map(|x| x * s)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Tanh(a) => {
                let d = zip_map(g, &node.value, |g, y| g * (1.0 - y * y));
                accumulate(grads, *a, d)
            }
            Op::Sigmoid(a) => {
                let d = zip_map(g, &node.value, |g, y| g * y * (1.0 - y));
                accumulate(grads, *a, d)
            }
            Op::Exp(a) => accumulate(grads, *a, zip_map(g, &node.value, |g, y| g * y)),
            Op::Log(a) => accumulate(grads, *a, zip_map(g, val(*a), |g, x| g / x)),
            Op::Softplus(a) => {
                accumulate(grads, *a, zip_map(g, val(*a), |g, x| g * sigmoid(x)))
            }
            Op::Square(a) => accumulate(grads, *a, zip_map(g, val(*a), |g, x| 2.0 * g * x)),
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let pv = val(p);
                    let c = pv.cols();
                    let mut d = vec![0.0; pv.numel()];
                    for r in 0..rows {
                        let dst = if pv.rows() == 1 { 0 } else { r };
                        let src = &g.data()[r * total + offset..r * total + offset + c];
                        for (o, s) in d[dst * c..(dst + 1) * c].iter_mut().zip(src) {
                            *o += s;
                        }
                    }
                    accumulate(grads, p, Tensor::from_parts(pv.shape().to_vec(), d));
                    offset += c;
                }
            }
            Op::Slice { src, start } => {
                let sv = val(*src);
                let c = sv.cols();
                let len = node.value.cols();
                let mut d = vec![0.0; sv.numel()];
                for (drow, grow) in d.chunks_mut(c).zip(g.data().chunks(len)) {
                    drow[*start..start + len].copy_from_slice(grow);
                }
                accumulate(grads, *src, Tensor::from_parts(sv.shape().to_vec(), d));
            }
            Op::Sum(a) => {
                let gv = g.item();
                accumulate(grads, *a, Tensor::full(val(*a).shape(), gv));
            }
            Op::Mean(a) => {
                let av = val(*a);
                let gv = g.item() / av.numel() as f64;
                accumulate(grads, *a, Tensor::full(av.shape(), gv));
            }
            Op::MeanRows(a) => {
                let av = val(*a);
                let inv = 1.0 / av.rows() as f64;
                let data = (0..av.rows())
                    .flat_map(|_| g.data().iter().map(move |x| x * inv))
                    .collect();
                accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), data));
            }
            Op::BroadcastRows(a) => {
                let av = val(*a);
                let d = column_sums(g.data(), av.cols());
                accumulate(grads, *a, Tensor::from_parts(av.shape().to_vec(), d));
            }
        }
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

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        other.shape().to_vec(),
        g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect(),
    )
}

fn column_sums(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in data.chunks(cols) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    out
}

/// Splits an output gradient of a broadcasting binary op into operand gradients.
/// `f(g, a, b)` returns the elementwise partials for one output element.
fn split_broadcast(
    g: &Tensor,
    a: &Tensor,
    b: &Tensor,
    kind: Broadcast,
    f: impl Fn(f64, f64, f64) -> (f64, f64),
) -> (Tensor, Tensor) {
    match kind {
        Broadcast::Same => {
            let mut ga = Vec::with_capacity(g.numel());
            let mut gb = Vec::with_capacity(g.numel());
            for ((&gi, &x), &y) in g.data().iter().zip(a.data()).zip(b.data()) {
                let (da, db) = f(gi, x, y);
                ga.push(da);
                gb.push(db);
            }
            (
                Tensor::from_parts(a.shape().to_vec(), ga),
                Tensor::from_parts(b.shape().to_vec(), gb),
            )
        }
        Broadcast::RhsRows => {
            let c = a.cols();
            let mut ga = Vec::with_capacity(g.numel());
            let mut gb = vec![0.0; c];
            for (grow, arow) in g.data().chunks(c).zip(a.data().chunks(c)) {
                for j in 0..c {
                    let (da, db) = f(grow[j], arow[j], b.data()[j]);
                    ga.push(da);
                    gb[j] += db;
                }
            }
            (
                Tensor::from_parts(a.shape().to_vec(), ga),
                Tensor::from_parts(b.shape().to_vec(), gb),
            )
        }
        Broadcast::LhsRows => {
            let c = b.cols();
            let mut ga = vec![0.0; c];
            let mut gb = Vec::with_capacity(g.numel());
            for (grow, brow) in g.data().chunks(c).zip(b.data().chunks(c)) {
                for j in 0..c {
                    let (da, db) = f(grow[j], a.data()[j], brow[j]);
                    ga[j] += da;
                    gb.push(db);
                }
            }
            (
                Tensor::from_parts(a.shape().to_vec(), ga),
                Tensor::from_parts(b.shape().to_vec(), gb),
            )
        }
    }
}
