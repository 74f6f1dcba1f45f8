//! Gradient tape and the differentiable primitives recorded on it.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::rc::Rc;
use std::sync::Arc;

use super::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::graph::Csr;

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    SpMM(Arc<Csr>, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    ScaleBy(usize, usize),
    AddRow(usize, usize),
    Concat(Vec<usize>),
    VStack(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    LogSigmoid(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    Mean(usize),
    SumSquares(usize),
    Norm(usize),
    RowDot(usize, usize),
    Cosine(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::SpMM(..) => "spmm",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::ScaleBy(..) => "scale_by",
            Op::AddRow(..) => "add_row",
            Op::Concat(..) => "concat",
            Op::VStack(..) => "vstack",
            Op::SliceCols(..) => "slice_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::LogSigmoid(..) => "log_sigmoid",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::Clamp(..) => "clamp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumSquares(..) => "sum_squares",
            Op::Norm(..) => "norm",
            Op::RowDot(..) => "row_dot",
            Op::Cosine(..) => "cosine",
        }
    }

    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::SpMM(_, a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::SliceCols(a, _)
            | Op::GatherRows(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::LogSigmoid(a)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::Clamp(a, ..)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumSquares(a)
            | Op::Norm(a) => vec![*a],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ScaleBy(a, b)
            | Op::AddRow(a, b)
            | Op::RowDot(a, b)
            | Op::Cosine(a, b) => vec![*a, *b],
            Op::Concat(v) | Op::VStack(v) => v.clone(),
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    tracked: bool,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// The tape is append-only. `backward` reads it without mutation, so it can be
/// called any number of times.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    pub fn get_id(&self, id: usize) -> Option<&Tensor> {
        self.grads.get(id).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let tracked = match &op {
            Op::Leaf => false,
            op => op.parents().iter().any(|&p| nodes[p].tracked),
        };
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A learnable leaf: gradients flow into it.
    pub fn param(&self, t: &Tensor) -> Var<'_> {
        let v = self.push(t.clone(), Op::Leaf);
        self.nodes.borrow_mut()[v.id].tracked = true;
        v
    }

    /// A constant leaf: never receives a gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        if !root.tracked {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::filled(1, 1, 1.0));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (p, pg) in vjp(&nodes, node, &g) {
                if !nodes[p].tracked {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Text dump of the recorded operation graph.
    pub fn dump(&self) -> String {
        let nodes = self.nodes.borrow();
        let mut s = String::new();
        for (i, n) in nodes.iter().enumerate() {
            let _ = writeln!(
                s,
                "%{i} = {}{:?} shape={:?}{}",
                n.op.name(),
                n.op.parents(),
                n.value.shape(),
                if n.tracked { " *" } else { "" }
            );
        }
        s
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // log σ(x) = -softplus(-x)
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn row_softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = x.cols();
    for r in out.data_mut().chunks_mut(c) {
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in r.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in r.iter_mut() {
            *v /= z;
        }
    }
    out
}

fn row_log_softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = x.cols();
    for r in out.data_mut().chunks_mut(c) {
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for v in r.iter_mut() {
            *v -= lse;
        }
    }
    out
}

fn row_norms(x: &Tensor) -> Vec<f64> {
    (0..x.rows())
        .map(|r| x.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

fn vjp(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |i: usize| nodes[i].value.as_ref();
    let y = node.value.as_ref();
    match &node.op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => vec![
            (*a, g.matmul(&val(*b).transpose())),
            (*b, val(*a).transpose().matmul(g)),
        ],
        Op::SpMM(s, b) => vec![(*b, s.tmul_dense(g))],
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
        Op::Mul(a, b) => vec![
            (*a, g.zip_map(val(*b), |g, b| g * b)),
            (*b, g.zip_map(val(*a), |g, a| g * a)),
        ],
        Op::Scale(a, c) => vec![(*a, g.map(|x| x * c))],
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::ScaleBy(a, s) => {
            let sv = val(*s).item();
            let ds: f64 = g.data().iter().zip(val(*a).data()).map(|(g, a)| g * a).sum();
            vec![(*a, g.map(|x| x * sv)), (*s, Tensor::scalar(ds))]
        }
        Op::AddRow(a, b) => {
            let c = g.cols();
            let mut db = Tensor::zeros(1, c);
            for r in 0..g.rows() {
                for (d, &x) in db.data_mut().iter_mut().zip(g.row_slice(r)) {
                    *d += x;
                }
            }
            vec![(*a, g.clone()), (*b, db)]
        }
        Op::Concat(parts) => {
            let mut off = 0;
            parts
                .iter()
                .map(|&p| {
                    let w = val(p).cols();
                    let mut out = Tensor::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        for j in 0..w {
                            out.set(r, j, g.get(r, off + j));
                        }
                    }
                    off += w;
                    (p, out)
                })
                .collect()
        }
        Op::VStack(parts) => {
            let mut off = 0;
            parts
                .iter()
                .map(|&p| {
                    let (r, c) = (val(p).rows(), val(p).cols());
                    let out = Tensor::from_rows(r, c, g.data()[off * c..(off + r) * c].to_vec());
                    off += r;
                    (p, out)
                })
                .collect()
        }
        Op::SliceCols(a, start) => {
            let src = val(*a);
            let mut out = Tensor::zeros(src.rows(), src.cols());
            for r in 0..g.rows() {
                for j in 0..g.cols() {
                    out.set(r, start + j, g.get(r, j));
                }
            }
            vec![(*a, out)]
        }
        Op::GatherRows(a, idx) => {
            let src = val(*a);
            let c = src.cols();
            let mut out = Tensor::zeros(src.rows(), c);
            let od = out.data_mut();
            for (k, &i) in idx.iter().enumerate() {
                for (o, &x) in od[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(k)) {
                    *o += x;
                }
            }
            vec![(*a, out)]
        }
        Op::Sigmoid(a) => vec![(*a, g.zip_map(y, |g, y| g * y * (1.0 - y)))],
        Op::Tanh(a) => vec![(*a, g.zip_map(y, |g, y| g * (1.0 - y * y)))],
        Op::Relu(a) => vec![(*a, g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 }))],
        Op::Exp(a) => vec![(*a, g.zip_map(y, |g, y| g * y))],
        Op::Ln(a) => vec![(*a, g.zip_map(val(*a), |g, x| g / x))],
        Op::LogSigmoid(a) => vec![(*a, g.zip_map(val(*a), |g, x| g * (1.0 - sigmoid(x))))],
        Op::Softmax(a) => {
            let c = y.cols();
            let mut out = g.clone();
            for r in 0..y.rows() {
                let yr = y.row_slice(r);
                let dot: f64 = g.row_slice(r).iter().zip(yr).map(|(g, y)| g * y).sum();
                for (j, o) in out.data_mut()[r * c..(r + 1) * c].iter_mut().enumerate() {
                    *o = yr[j] * (*o - dot);
                }
            }
            vec![(*a, out)]
        }
        Op::LogSoftmax(a) => {
            let c = y.cols();
            let mut out = g.clone();
            for r in 0..y.rows() {
                let gs: f64 = g.row_slice(r).iter().sum();
                let yr = y.row_slice(r);
                for (j, o) in out.data_mut()[r * c..(r + 1) * c].iter_mut().enumerate() {
                    *o -= yr[j].exp() * gs;
                }
            }
            vec![(*a, out)]
        }
        Op::Clamp(a, lo, hi) => vec![(
            *a,
            g.zip_map(val(*a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 }),
        )],
        Op::Sum(a) => {
            let s = val(*a);
            vec![(*a, Tensor::filled(s.rows(), s.cols(), g.item()))]
        }
        Op::Mean(a) => {
            let s = val(*a);
            let n = s.len().max(1) as f64;
            vec![(*a, Tensor::filled(s.rows(), s.cols(), g.item() / n))]
        }
        Op::SumSquares(a) => {
            let gi = g.item();
            vec![(*a, val(*a).map(|x| 2.0 * x * gi))]
        }
        Op::Norm(a) => {
            let n = y.item();
            let gi = g.item();
            if n <= NORM_FLOOR {
                let s = val(*a);
                vec![(*a, Tensor::zeros(s.rows(), s.cols()))]
            } else {
                vec![(*a, val(*a).map(|x| gi * x / n))]
            }
        }
        Op::RowDot(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let c = av.cols();
            let mut da = Tensor::zeros(av.rows(), c);
            let mut db = Tensor::zeros(av.rows(), c);
            for r in 0..av.rows() {
                let gr = g.get(r, 0);
                for j in 0..c {
                    da.set(r, j, gr * bv.get(r, j));
                    db.set(r, j, gr * av.get(r, j));
                }
            }
            vec![(*a, da), (*b, db)]
        }
        Op::Cosine(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let na = row_norms(av);
            let nb = row_norms(bv);
            let c = av.cols();
            let mut da = Tensor::zeros(av.rows(), c);
            let mut db = Tensor::zeros(av.rows(), c);
            for r in 0..av.rows() {
                let (ra, rb) = (na[r].max(NORM_FLOOR), nb[r].max(NORM_FLOOR));
                let cos = y.get(r, 0);
                let gr = g.get(r, 0);
                for j in 0..c {
                    let (x, z) = (av.get(r, j), bv.get(r, j));
                    da.set(r, j, gr * (z / (ra * rb) - cos * x / (ra * ra)));
                    db.set(r, j, gr * (x / (ra * rb) - cos * z / (rb * rb)));
                }
            }
            vec![(*a, da), (*b, db)]
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn is_tracked(&self) -> bool {
        self.tape.nodes.borrow()[self.id].tracked
    }

    fn unary(self, op: Op, f: impl FnOnce(&Tensor) -> Tensor) -> Var<'t> {
        let out = f(&self.value());
        self.tape.push(out, op)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.cols() != b.rows() {
            return Err(shape_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
        }
        Ok(self.tape.push(a.matmul(&b), Op::MatMul(self.id, other.id)))
    }

    /// `sparse · self`; the sparse operand is a constant.
    pub fn spmm(self, sparse: &Arc<Csr>) -> Result<Var<'t>> {
        let x = self.value();
        if sparse.n_cols() != x.rows() {
            return Err(shape_err(
                "spmm",
                format!("{}x{} x {:?}", sparse.n_rows(), sparse.n_cols(), x.shape()),
            ));
        }
        Ok(self.tape.push(sparse.mul_dense(&x), Op::SpMM(Arc::clone(sparse), self.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        Ok(self.tape.push(a.zip_map(&b, |x, y| x + y), Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        Ok(self.tape.push(a.zip_map(&b, |x, y| x - y), Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        Ok(self.tape.push(a.zip_map(&b, |x, y| x * y), Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |a| a.map(|x| x * c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |a| a.map(|x| x + c))
    }

    /// Multiply every entry by a `[1, 1]` variable.
    pub fn scale_by(self, s: Var<'t>) -> Result<Var<'t>> {
        let sv = s.value();
        if sv.len() != 1 {
            return Err(shape_err("scale_by", format!("factor shape {:?}", sv.shape())));
        }
        let k = sv.item();
        Ok(self.tape.push(self.value().map(|x| x * k), Op::ScaleBy(self.id, s.id)))
    }

    /// Add a `[1, n]` row to every row.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), row.value());
        if b.rows() != 1 || b.cols() != a.cols() {
            return Err(shape_err("add_row", format!("{:?} + {:?}", a.shape(), b.shape())));
        }
        let c = a.cols();
        let mut out = (*a).clone();
        for r in out.data_mut().chunks_mut(c) {
            for (o, x) in r.iter_mut().zip(b.data()) {
                *o += x;
            }
        }
        Ok(self.tape.push(out, Op::AddRow(self.id, row.id)))
    }

    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let rows = vals[0].rows();
        if vals.iter().any(|v| v.rows() != rows) {
            return Err(shape_err("concat", "row counts differ"));
        }
        let refs: Vec<&Tensor> = vals.iter().map(|v| v.as_ref()).collect();
        Ok(first
            .tape
            .push(Tensor::hcat(&refs), Op::Concat(parts.iter().map(|p| p.id).collect())))
    }

    /// Concatenate along rows.
    pub fn vstack(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("vstack", "no inputs"))?;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let cols = vals[0].cols();
        if vals.iter().any(|v| v.cols() != cols) {
            return Err(shape_err("vstack", "column counts differ"));
        }
        let refs: Vec<&Tensor> = vals.iter().map(|v| v.as_ref()).collect();
        Ok(first
            .tape
            .push(Tensor::vcat(&refs), Op::VStack(parts.iter().map(|p| p.id).collect())))
    }

    /// Columns `start..end`.
    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        let a = self.value();
        if start >= end || end > a.cols() {
            return Err(shape_err(
                "slice_cols",
                format!("{start}..{end} of {:?}", a.shape()),
            ));
        }
        let mut out = Vec::with_capacity(a.rows() * (end - start));
        for r in 0..a.rows() {
            out.extend_from_slice(&a.row_slice(r)[start..end]);
        }
        Ok(self.tape.push(
            Tensor::from_rows(a.rows(), end - start, out),
            Op::SliceCols(self.id, start),
        ))
    }

    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows()) {
            return Err(shape_err("gather_rows", format!("row {bad} of {:?}", a.shape())));
        }
        Ok(self
            .tape
            .push(a.gather_rows(idx), Op::GatherRows(self.id, idx.to_vec())))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |a| a.map(sigmoid))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), |a| a.map(f64::tanh))
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |a| a.map(|x| x.max(0.0)))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), |a| a.map(f64::exp))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln(self.id), |a| a.map(f64::ln))
    }

    /// Numerically stable `ln σ(x)`.
    pub fn log_sigmoid(self) -> Var<'t> {
        self.unary(Op::LogSigmoid(self.id), |a| a.map(log_sigmoid))
    }

    /// Softmax over each row.
    pub fn softmax(self) -> Var<'t> {
        self.unary(Op::Softmax(self.id), row_softmax)
    }

    pub fn log_softmax(self) -> Var<'t> {
        self.unary(Op::LogSoftmax(self.id), row_log_softmax)
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), |a| a.map(|x| x.clamp(lo, hi)))
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum(self.id), |a| Tensor::scalar(a.sum()))
    }

    pub fn mean(self) -> Var<'t> {
        self.unary(Op::Mean(self.id), |a| {
            Tensor::scalar(a.sum() / a.len().max(1) as f64)
        })
    }

    pub fn sum_squares(self) -> Var<'t> {
        self.unary(Op::SumSquares(self.id), |a| Tensor::scalar(a.sum_squares()))
    }

    /// Frobenius norm.
    pub fn norm(self) -> Var<'t> {
        self.unary(Op::Norm(self.id), |a| Tensor::scalar(a.sum_squares().sqrt()))
    }

    /// Row-wise inner products, shape `[rows, 1]`.
    pub fn row_dot(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("row_dot", &a, &b)?;
        let out: Vec<f64> = (0..a.rows())
            .map(|r| a.row_slice(r).iter().zip(b.row_slice(r)).map(|(x, y)| x * y).sum())
            .collect();
        Ok(self
            .tape
            .push(Tensor::from_rows(a.rows(), 1, out), Op::RowDot(self.id, other.id)))
    }

    /// Row-wise cosine similarity, shape `[rows, 1]`.
    pub fn cosine(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("cosine", &a, &b)?;
        let (na, nb) = (row_norms(&a), row_norms(&b));
        let out: Vec<f64> = (0..a.rows())
            .map(|r| {
                let dot: f64 = a.row_slice(r).iter().zip(b.row_slice(r)).map(|(x, y)| x * y).sum();
                dot / (na[r].max(NORM_FLOOR) * nb[r].max(NORM_FLOOR))
            })
            .collect();
        Ok(self
            .tape
            .push(Tensor::from_rows(a.rows(), 1, out), Op::Cosine(self.id, other.id)))
    }
}
