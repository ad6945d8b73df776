//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in execution order; [`Tape::backward`]
//! walks it in exact reverse, accumulating gradients into every node that
//! depends on a parameter leaf. Constants (including anything computed only
//! from constants) never receive gradients, which is how stop-gradient is
//! expressed.
//!
//! Graph propagation enters as a constant linear operator ([`Propagator`])
//! applied on the left, so only the dense side is differentiated.

use crate::dense::{dot, Matrix};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Lower bound on row norms in [`Tape::row_l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Constant left operand for graph propagation.
#[derive(Debug, Clone, PartialEq)]
pub enum Propagator {
    Sparse { forward: SparseGraph, transpose: SparseGraph },
    Dense(Matrix),
}

impl Propagator {
    pub fn sparse(g: SparseGraph) -> Self {
        let transpose = g.transpose();
        Propagator::Sparse { forward: g, transpose }
    }

    pub fn n(&self) -> usize {
        match self {
            Propagator::Sparse { forward, .. } => forward.n(),
            Propagator::Dense(m) => m.rows(),
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Propagator::Sparse { forward, .. } => forward.spmm(x),
            Propagator::Dense(m) => m.matmul(x),
        }
    }

    pub fn apply_transpose(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Propagator::Sparse { transpose, .. } => transpose.spmm(x),
            Propagator::Dense(m) => m.t_matmul(x),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Propagate(&'a Propagator, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Scale(Var, f64),
    Prelu(Var, Var),
    /// Stores the row norms (without epsilon).
    RowL2Normalize(Var, Vec<f64>),
    RowwiseDot(Var, Var),
    Mean(Var),
    Sum(Var),
    /// Mean over rows of `logsumexp(row) − row[i]`; stores row softmax.
    SoftmaxXentDiag(Var, Matrix),
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Propagate(..) => "spmm",
            Op::Add(..) => "add",
            Op::AddRowBias(..) => "add_row_bias",
            Op::Scale(..) => "scale",
            Op::Prelu(..) => "prelu",
            Op::RowL2Normalize(..) => "row_l2_normalize",
            Op::RowwiseDot(..) => "rowwise_dot",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::SoftmaxXentDiag(..) => "softmax_xent_diag",
        }
    }
}

#[derive(Debug)]
struct Node<'a> {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op<'a>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    backward_done: bool,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last backward pass; zeros for nodes the
    /// loss does not depend on.
    pub fn grad(&self, v: Var) -> Matrix {
        let node = &self.nodes[v.0];
        node.grad.clone().unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))
    }

    /// Clears gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Matrix, op: Op<'a>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, grad: None, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_t(self.value(b))?;
        self.push(out, Op::MatMulT(a, b), &[a, b])
    }

    /// Copies the value of `v` into a new constant leaf (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// `P · x` for a constant operator `P`.
    pub fn spmm(&mut self, p: &'a Propagator, x: Var) -> Result<Var> {
        let out = p.apply(self.value(x))?;
        self.push(out, Op::Propagate(p, x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", format!("{:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1×d` row vector to every row of an `n×d` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(bias));
        if bs.0 != 1 || bs.1 != xs.1 {
            return Err(Error::shape("add_row_bias", format!("{xs:?} + {bs:?}")));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).row(0).to_vec();
        for r in 0..xs.0 {
            for (o, bv) in out.row_mut(r).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRowBias(x, bias), &[x, bias])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let mut out = self.value(x).clone();
        out.scale_in_place(s);
        self.push(out, Op::Scale(x, s), &[x])
    }

    /// `max(x, 0) + a·min(x, 0)` with a learnable scalar slope `a` (1×1).
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.shape(slope) != (1, 1) {
            return Err(Error::shape("prelu", format!("slope must be 1x1, got {:?}", self.shape(slope))));
        }
        let a = self.scalar(slope);
        let mut out = self.value(x).clone();
        for v in out.as_mut_slice() {
            if *v <= 0.0 {
                *v *= a;
            }
        }
        self.push(out, Op::Prelu(x, slope), &[x, slope])
    }

    /// Each row divided by `max(‖row‖, NORM_EPS)`; all-zero rows stay zero.
    pub fn row_l2_normalize(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let norms: Vec<f64> = (0..xv.rows()).map(|r| dot(xv.row(r), xv.row(r)).sqrt()).collect();
        let mut out = xv.clone();
        for (r, &n) in norms.iter().enumerate() {
            let inv = 1.0 / n.max(NORM_EPS);
            for v in out.row_mut(r) {
                *v *= inv;
            }
        }
        self.push(out, Op::RowL2Normalize(x, norms), &[x])
    }

    /// `n×1` column of per-row dot products.
    pub fn rowwise_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("rowwise_dot", format!("{:?} . {:?}", self.shape(a), self.shape(b))));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let data = (0..av.rows()).map(|r| dot(av.row(r), bv.row(r))).collect();
        let out = Matrix::from_vec(av.rows(), 1, data)?;
        self.push(out, Op::RowwiseDot(a, b), &[a, b])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let count = xv.rows() * xv.cols();
        if count == 0 {
            return Err(Error::shape("mean", "empty input"));
        }
        let m = xv.as_slice().iter().sum::<f64>() / count as f64;
        self.push(Matrix::filled(1, 1, m), Op::Mean(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).as_slice().iter().sum::<f64>();
        self.push(Matrix::filled(1, 1, s), Op::Sum(x), &[x])
    }

    /// Cross-entropy of each row's softmax against the diagonal target,
    /// averaged over rows. Input must be square.
    pub fn softmax_xent_diag(&mut self, logits: Var) -> Result<Var> {
        let s = self.value(logits);
        if s.rows() != s.cols() || s.rows() == 0 {
            return Err(Error::shape("softmax_xent_diag", format!("needs a non-empty square matrix, got {:?}", s.shape())));
        }
        let n = s.rows();
        let mut probs = Matrix::zeros(n, n);
        let mut loss = 0.0;
        for r in 0..n {
            let row = s.row(r);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            loss += mx + z.ln() - row[r];
            for (p, v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - mx).exp() / z;
            }
        }
        let out = Matrix::filled(1, 1, loss / n as f64);
        self.push(out, Op::SoftmaxXentDiag(logits, probs), &[logits])
    }

    /// Populates gradients of the scalar `loss` with respect to every node
    /// that depends on a parameter.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract("backward called twice without zero_grad".into()));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!("backward needs a scalar loss, got {:?}", self.shape(loss))));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let contributions = self.local_grads(i, &g)?;
            self.nodes[i].grad = Some(g);
            for (v, c) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut self.nodes[v.0].grad {
                    Some(acc) => acc.add_assign(&c),
                    slot @ None => *slot = Some(c),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Matrix) -> Result<Vec<(Var, Matrix)>> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    out.push((*a, g.matmul_t(val(*b))?));
                }
                if wants(*b) {
                    out.push((*b, val(*a).t_matmul(g)?));
                }
            }
            Op::MatMulT(a, b) => {
                // out = a bᵀ: da = g b, db = gᵀ a
                if wants(*a) {
                    out.push((*a, g.matmul(val(*b))?));
                }
                if wants(*b) {
                    out.push((*b, g.t_matmul(val(*a))?));
                }
            }
            Op::Propagate(p, x) => out.push((*x, p.apply_transpose(g)?)),
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::AddRowBias(x, b) => {
                out.push((*x, g.clone()));
                if wants(*b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    out.push((*b, gb));
                }
            }
            Op::Scale(x, s) => {
                let mut gx = g.clone();
                gx.scale_in_place(*s);
                out.push((*x, gx));
            }
            Op::Prelu(x, slope) => {
                let a = val(*slope).get(0, 0);
                let xv = val(*x);
                let mut gx = g.clone();
                let mut ga = 0.0;
                for ((gv, &xi), &gi) in gx.as_mut_slice().iter_mut().zip(xv.as_slice()).zip(g.as_slice()) {
                    if xi <= 0.0 {
                        *gv *= a;
                        ga += xi * gi;
                    }
                }
                out.push((*x, gx));
                if wants(*slope) {
                    out.push((*slope, Matrix::filled(1, 1, ga)));
                }
            }
            Op::RowL2Normalize(x, norms) => {
                let xv = val(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for (r, &n) in norms.iter().enumerate() {
                    let denom = n.max(NORM_EPS);
                    let xr = xv.row(r);
                    let gr = g.row(r);
                    let proj = if n > NORM_EPS { dot(xr, gr) / (n * n * n) } else { 0.0 };
                    for ((o, &xi), &gi) in gx.row_mut(r).iter_mut().zip(xr).zip(gr) {
                        *o = gi / denom - xi * proj;
                    }
                }
                out.push((*x, gx));
            }
            Op::RowwiseDot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let scale_rows = |m: &Matrix| {
                    let mut o = m.clone();
                    for r in 0..o.rows() {
                        let s = g.get(r, 0);
                        for v in o.row_mut(r) {
                            *v *= s;
                        }
                    }
                    o
                };
                if wants(*a) {
                    out.push((*a, scale_rows(bv)));
                }
                if wants(*b) {
                    out.push((*b, scale_rows(av)));
                }
            }
            Op::Mean(x) => {
                let xv = val(*x);
                let c = g.get(0, 0) / (xv.rows() * xv.cols()) as f64;
                out.push((*x, Matrix::filled(xv.rows(), xv.cols(), c)));
            }
            Op::Sum(x) => {
                let xv = val(*x);
                out.push((*x, Matrix::filled(xv.rows(), xv.cols(), g.get(0, 0))));
            }
            Op::SoftmaxXentDiag(x, probs) => {
                let n = probs.rows();
                let c = g.get(0, 0) / n as f64;
                let mut gx = probs.clone();
                for r in 0..n {
                    gx.set(r, r, gx.get(r, r) - 1.0);
                }
                gx.scale_in_place(c);
                out.push((*x, gx));
            }
        }
        Ok(out)
    }
}
