use std::rc::Rc;

use super::{gemm, Activation, Matrix, ParamId, ParamSet};
use crate::error::TensorError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Directed weighted edge list used by the sparse attention ops.
///
/// Edge `e` sends from `src[e]` (a row of the source matrix) into `dst[e]`
/// (a row of the output).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Vec<f64>,
    pub n_src: usize,
    pub n_dst: usize,
}

impl EdgeIndex {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    AbsSum(Var),
    SquareSum(Var),
    OrthPenalty(Var),
    MaskedSoftmax(Var, Rc<Vec<Vec<usize>>>),
    GatherRows(Var, Rc<Vec<usize>>),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    BlockMeanRows(Var, usize),
    EdgeSoftmax(Var, Rc<EdgeIndex>),
    EdgeAggregate(Var, Var, Rc<EdgeIndex>),
    CrossEntropy(Var, Rc<Vec<usize>>, Rc<Vec<usize>>),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and the backward pass is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass with respect to constant leaves.
/// Intermediate gradients are released during the sweep.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

fn broadcast(op: &'static str, a: &Matrix, b: &Matrix) -> Result<(), TensorError> {
    if a.shape() == b.shape() || a.shape() == (1, 1) || b.shape() == (1, 1) {
        Ok(())
    } else {
        Err(TensorError::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        })
    }
}

fn broadcast_zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    if a.shape() == b.shape() {
        a.zip_map(b, f)
    } else if b.shape() == (1, 1) {
        let s = b.get(0, 0);
        a.map(|x| f(x, s))
    } else {
        let s = a.get(0, 0);
        b.map(|x| f(s, x))
    }
}

/// Reduces a broadcast gradient back to the operand's shape.
fn unbroadcast(g: Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        g
    } else {
        Matrix::scalar(g.sum())
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// A value that receives no gradient of its own beyond [`Gradients::get`].
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Leaf bound to a parameter; `backward` accumulates its gradient into the set.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`, the layout used by weights stored as `out x in`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(TensorError::Shape {
                op: "matmul_t",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let mut v = Matrix::zeros(av.rows(), bv.rows());
        gemm(av, false, bv, true, &mut v, 0.0);
        Ok(self.push(v, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        broadcast("add", x, y)?;
        let v = broadcast_zip(x, y, |p, q| p + q);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        broadcast("sub", x, y)?;
        let v = broadcast_zip(x, y, |p, q| p - q);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        broadcast("mul", x, y)?;
        let v = broadcast_zip(x, y, |p, q| p * q);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(TensorError::Shape {
                op: "add_bias",
                lhs: x.shape(),
                rhs: b.shape(),
            });
        }
        let mut v = x.clone();
        let cols = v.cols();
        for (i, e) in v.data_mut().iter_mut().enumerate() {
            *e += b.data()[i % cols];
        }
        Ok(self.push(v, Op::AddBias(a, bias)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        let v = self.value(a).map(|x| act.apply(x));
        self.push(v, Op::Act(a, act))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Matrix::scalar(m.sum() / m.len() as f64);
        self.push(v, Op::Mean(a))
    }

    /// Mean squared error over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mse", x, y)?;
        let n = x.len() as f64;
        let s: f64 = x.data().iter().zip(y.data()).map(|(p, q)| (p - q) * (p - q)).sum();
        Ok(self.push(Matrix::scalar(s / n), Op::Mse(a, b)))
    }

    /// Sum of absolute values (L1 norm of the flattened matrix).
    pub fn abs_sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).data().iter().map(|x| x.abs()).sum());
        self.push(v, Op::AbsSum(a))
    }

    /// Sum of squares (squared Frobenius norm).
    pub fn square_sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).frobenius_sq());
        self.push(v, Op::SquareSum(a))
    }

    /// `||W Wᵀ - I||_F²` for a weight matrix `W`.
    pub fn orth_penalty(&mut self, w: Var) -> Var {
        let p = orth_residual(self.value(w));
        self.push(Matrix::scalar(p.frobenius_sq()), Op::OrthPenalty(w))
    }

    /// Softmax over the listed columns of each row; other entries are exactly zero.
    pub fn masked_row_softmax(&mut self, logits: Var, mask: Rc<Vec<Vec<usize>>>) -> Result<Var, TensorError> {
        let x = self.value(logits);
        if mask.len() != x.rows() {
            return Err(TensorError::Shape {
                op: "masked_row_softmax",
                lhs: x.shape(),
                rhs: (mask.len(), x.cols()),
            });
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for (r, cols) in mask.iter().enumerate() {
            if cols.is_empty() {
                return Err(TensorError::DegenerateNeighborhood(r));
            }
            if let Some(&bad) = cols.iter().find(|&&c| c >= x.cols()) {
                return Err(TensorError::Index {
                    index: bad,
                    len: x.cols(),
                });
            }
            let row = x.row(r);
            let max = cols.iter().map(|&c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = cols.iter().map(|&c| (row[c] - max).exp()).sum();
            let o = out.row_mut(r);
            for &c in cols.iter() {
                o[c] = (row[c] - max).exp() / z;
            }
        }
        Ok(self.push(out, Op::MaskedSoftmax(logits, mask)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Result<Var, TensorError> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(TensorError::Index {
                index: bad,
                len: x.rows(),
            });
        }
        let v = x.select_rows(&idx);
        Ok(self.push(v, Op::GatherRows(a, idx)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, TensorError> {
        let v = self.value(a).reshape(rows, cols)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::hconcat(&mats)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Means of consecutive blocks of `block` rows: `(g*block) x d -> g x d`.
    pub fn block_mean_rows(&mut self, a: Var, block: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if block == 0 || !x.rows().is_multiple_of(block) {
            return Err(TensorError::Shape {
                op: "block_mean_rows",
                lhs: x.shape(),
                rhs: (block, x.cols()),
            });
        }
        let groups = x.rows() / block;
        let d = x.cols();
        let mut out = Matrix::zeros(groups, d);
        for g in 0..groups {
            let o = out.row_mut(g);
            for r in g * block..(g + 1) * block {
                for (acc, v) in o.iter_mut().zip(x.row(r)) {
                    *acc += v;
                }
            }
            for v in o.iter_mut() {
                *v /= block as f64;
            }
        }
        Ok(self.push(out, Op::BlockMeanRows(a, block)))
    }

    /// Weighted softmax of per-edge logits grouped by destination:
    /// `α_e = w_e exp(l_e) / Σ_{e' → dst(e)} w_e' exp(l_e')`.
    pub fn edge_softmax(&mut self, logits: Var, edges: Rc<EdgeIndex>) -> Result<Var, TensorError> {
        let l = self.value(logits);
        if l.shape() != (edges.len(), 1) {
            return Err(TensorError::Shape {
                op: "edge_softmax",
                lhs: l.shape(),
                rhs: (edges.len(), 1),
            });
        }
        if !l.is_finite() {
            return Err(TensorError::NonFinite("edge_softmax"));
        }
        let ld = l.data();
        let mut max = vec![f64::NEG_INFINITY; edges.n_dst];
        for (e, &d) in edges.dst.iter().enumerate() {
            max[d] = max[d].max(ld[e]);
        }
        if let Some(empty) = max.iter().position(|m| *m == f64::NEG_INFINITY) {
            return Err(TensorError::DegenerateNeighborhood(empty));
        }
        let mut num = vec![0.0; edges.len()];
        let mut z = vec![0.0; edges.n_dst];
        for e in 0..edges.len() {
            let d = edges.dst[e];
            num[e] = edges.weight[e] * (ld[e] - max[d]).exp();
            z[d] += num[e];
        }
        for e in 0..edges.len() {
            num[e] /= z[edges.dst[e]];
        }
        let v = Matrix::from_vec(edges.len(), 1, num)?;
        Ok(self.push(v, Op::EdgeSoftmax(logits, edges)))
    }

    /// `out[dst(e)] += α_e · x[src(e)]` over all edges.
    pub fn edge_aggregate(&mut self, alpha: Var, x: Var, edges: Rc<EdgeIndex>) -> Result<Var, TensorError> {
        let (a, xm) = (self.value(alpha), self.value(x));
        if a.shape() != (edges.len(), 1) || xm.rows() != edges.n_src {
            return Err(TensorError::Shape {
                op: "edge_aggregate",
                lhs: a.shape(),
                rhs: xm.shape(),
            });
        }
        let d = xm.cols();
        let mut out = Matrix::zeros(edges.n_dst, d);
        for e in 0..edges.len() {
            let w = a.data()[e];
            let src = xm.row(edges.src[e]);
            let o = out.row_mut(edges.dst[e]);
            for (acc, v) in o.iter_mut().zip(src) {
                *acc += w * v;
            }
        }
        Ok(self.push(out, Op::EdgeAggregate(alpha, x, edges)))
    }

    /// Mean cross-entropy of softmax(logits) against `labels`, over the `mask` rows only.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        labels: Rc<Vec<usize>>,
        mask: Rc<Vec<usize>>,
    ) -> Result<Var, TensorError> {
        let x = self.value(logits);
        if mask.is_empty() {
            return Err(TensorError::Contract("cross-entropy mask is empty".into()));
        }
        if labels.len() != x.rows() {
            return Err(TensorError::Shape {
                op: "cross_entropy",
                lhs: x.shape(),
                rhs: (labels.len(), 1),
            });
        }
        let mut total = 0.0;
        for &r in mask.iter() {
            if r >= x.rows() {
                return Err(TensorError::Index {
                    index: r,
                    len: x.rows(),
                });
            }
            let y = labels[r];
            if y >= x.cols() {
                return Err(TensorError::Index {
                    index: y,
                    len: x.cols(),
                });
            }
            let row = x.row(r);
            total -= log_softmax(row)[y];
        }
        let v = Matrix::scalar(total / mask.len() as f64);
        Ok(self.push(v, Op::CrossEntropy(logits, labels, mask)))
    }

    /// Reverse sweep from a `1 x 1` output. Parameter gradients are added to
    /// `params`; gradients of constant leaves are returned.
    pub fn backward(&self, output: Var, params: &mut ParamSet) -> Result<Gradients, TensorError> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(TensorError::NonScalarOutput(out.rows(), out.cols()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::scalar(1.0));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => grads[idx] = Some(g),
                Op::Param(id) => params.accumulate(*id, &g)?,
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    gemm(&g, false, bv, true, &mut ga, 0.0);
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(av, true, &g, false, &mut gb, 0.0);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    gemm(&g, false, bv, false, &mut ga, 0.0);
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(&g, true, av, false, &mut gb, 0.0);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, unbroadcast(g.clone(), self.shape(*a)));
                    acc(&mut grads, *b, unbroadcast(g, self.shape(*b)));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, unbroadcast(g.clone(), self.shape(*a)));
                    acc(&mut grads, *b, unbroadcast(g.scale(-1.0), self.shape(*b)));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = broadcast_zip(&g, bv, |p, q| p * q);
                    let gb = broadcast_zip(&g, av, |p, q| p * q);
                    acc(&mut grads, *a, unbroadcast(ga, av.shape()));
                    acc(&mut grads, *b, unbroadcast(gb, bv.shape()));
                }
                Op::AddBias(a, b) => {
                    let cols = g.cols();
                    let mut gb = Matrix::zeros(1, cols);
                    for r in 0..g.rows() {
                        for (acc_v, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *acc_v += v;
                        }
                    }
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.scale(*s)),
                Op::Act(a, act) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let mut ga = g;
                    for ((gv, &xv), &yv) in ga.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                        *gv *= act.derivative(xv, yv);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    acc(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::Mean(a) => {
                    let (r, c) = self.shape(*a);
                    acc(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0) / (r * c) as f64));
                }
                Op::Mse(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let k = 2.0 * g.get(0, 0) / av.len() as f64;
                    let ga = av.zip_map(bv, |p, q| k * (p - q));
                    acc(&mut grads, *b, ga.scale(-1.0));
                    acc(&mut grads, *a, ga);
                }
                Op::AbsSum(a) => {
                    let s = g.get(0, 0);
                    let ga = self.value(*a).map(|x| {
                        if x > 0.0 {
                            s
                        } else if x < 0.0 {
                            -s
                        } else {
                            0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::SquareSum(a) => {
                    let s = 2.0 * g.get(0, 0);
                    acc(&mut grads, *a, self.value(*a).scale(s));
                }
                Op::OrthPenalty(w) => {
                    let wv = self.value(*w);
                    let p = orth_residual(wv);
                    let ga = p.matmul(wv)?.scale(4.0 * g.get(0, 0));
                    acc(&mut grads, *w, ga);
                }
                Op::MaskedSoftmax(a, mask) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for (r, cols) in mask.iter().enumerate() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = cols.iter().map(|&c| yr[c] * gr[c]).sum();
                        let o = ga.row_mut(r);
                        for &c in cols.iter() {
                            o[c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for (k, &src) in idx.iter().enumerate() {
                        for (acc_v, v) in ga.row_mut(src).iter_mut().zip(g.row(k)) {
                            *acc_v += v;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    acc(&mut grads, *a, g.reshape(r, c)?);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let gp = Matrix::from_fn(r, c, |i, j| g.get(i, offset + j));
                        offset += c;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::BlockMeanRows(a, block) => {
                    let (r, c) = self.shape(*a);
                    let inv = 1.0 / *block as f64;
                    let ga = Matrix::from_fn(r, c, |i, j| g.get(i / block, j) * inv);
                    acc(&mut grads, *a, ga);
                }
                Op::EdgeSoftmax(a, edges) => {
                    let alpha = node.value.data();
                    let gd = g.data();
                    let mut dot = vec![0.0; edges.n_dst];
                    for e in 0..edges.len() {
                        dot[edges.dst[e]] += alpha[e] * gd[e];
                    }
                    let ga: Vec<f64> = (0..edges.len())
                        .map(|e| alpha[e] * (gd[e] - dot[edges.dst[e]]))
                        .collect();
                    acc(&mut grads, *a, Matrix::from_vec(edges.len(), 1, ga)?);
                }
                Op::EdgeAggregate(alpha, x, edges) => {
                    let (av, xv) = (self.value(*alpha), self.value(*x));
                    let mut galpha = vec![0.0; edges.len()];
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for e in 0..edges.len() {
                        let gr = g.row(edges.dst[e]);
                        let xr = xv.row(edges.src[e]);
                        galpha[e] = gr.iter().zip(xr).map(|(p, q)| p * q).sum();
                        let w = av.data()[e];
                        for (acc_v, v) in gx.row_mut(edges.src[e]).iter_mut().zip(gr) {
                            *acc_v += w * v;
                        }
                    }
                    acc(&mut grads, *alpha, Matrix::from_vec(edges.len(), 1, galpha)?);
                    acc(&mut grads, *x, gx);
                }
                Op::CrossEntropy(a, labels, mask) => {
                    let x = self.value(*a);
                    let s = g.get(0, 0) / mask.len() as f64;
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    for &r in mask.iter() {
                        let lp = log_softmax(x.row(r));
                        let o = ga.row_mut(r);
                        for (c, v) in o.iter_mut().enumerate() {
                            *v += s * lp[c].exp();
                        }
                        o[labels[r]] -= s;
                    }
                    acc(&mut grads, *a, ga);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn orth_residual(w: &Matrix) -> Matrix {
    let mut p = Matrix::zeros(w.rows(), w.rows());
    gemm(w, false, w, true, &mut p, 0.0);
    for i in 0..w.rows() {
        let v = p.get(i, i);
        p.set(i, i, v - 1.0);
    }
    p
}

/// Numerically stable log-softmax of one row.
pub(crate) fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}
