//! Reverse-mode differentiation over a recorded tape of matrix operations.
//!
//! Every model forward pass records onto a fresh [`Tape`]. Nodes hold their
//! forward values; [`Tape::backward`] walks the tape once in reverse and
//! accumulates `∂loss/∂param` into the gradients of a [`ParamStore`].
//!
//! The vocabulary is closed: each operation below has a hand-written
//! vector-Jacobian product that is checked against central differences in
//! the test suite.

use super::dense::{dot, DenseMatrix};
use super::params::{ParamId, ParamStore};
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};
use crate::kan::spline::{SplineGrid, MAX_ORDER};

/// Handle to a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Node(usize);

enum Op<'a> {
    Constant,
    Param(ParamId),
    Spmm { a: &'a SparseMatrix, x: Node },
    MatMul(Node, Node),
    Transpose(Node),
    Add(Node, Node),
    AddRow(Node, Node),
    Mul(Node, Node),
    Scale(Node, f64),
    ScaleColumn { x: Node, weights: Node, col: usize },
    Silu(Node),
    Sigmoid(Node),
    Tanh(Node),
    SoftmaxRows(Node),
    Spline(Box<SplineRecord>),
    ConcatCols(Vec<Node>),
    SumAll(Node),
    MeanRows(Node),
    GatherRows { x: Node, index: Vec<usize> },
    RowDot(Node, Node),
    Bce { p: Node, labels: Vec<f64>, eps: f64 },
}

/// Basis values cached by the spline forward pass for reuse in backward.
struct SplineRecord {
    x: Node,
    coef: Node,
    scale: Option<Node>,
    d_out: usize,
    basis_count: usize,
    width: usize,
    starts: Vec<usize>,
    vals: Vec<f64>,
    ders: Vec<f64>,
}

struct Entry<'a> {
    value: DenseMatrix,
    op: Op<'a>,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Entry<'a>>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: Node) -> &DenseMatrix {
        &self.nodes[node.0].value
    }

    fn push(&mut self, value: DenseMatrix, op: Op<'a>) -> Node {
        self.nodes.push(Entry { value, op });
        Node(self.nodes.len() - 1)
    }

    fn shape(&self, node: Node) -> (usize, usize) {
        self.nodes[node.0].value.shape()
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Node {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Node {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn spmm(&mut self, a: &'a SparseMatrix, x: Node) -> Result<Node> {
        let value = a.spmm(self.value(x))?;
        Ok(self.push(value, Op::Spmm { a, x }))
    }

    pub fn matmul(&mut self, a: Node, b: Node) -> Result<Node> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Node) -> Node {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Node, b: Node) -> Result<Node> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds a `1 x c` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Node, row: Node) -> Result<Node> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(Error::shape("add_row", format!("bias {:?} for width {c}", self.shape(row))));
        }
        let bias = self.value(row).row(0).to_vec();
        let mut value = self.value(a).clone();
        for i in 0..r {
            for (v, b) in value.row_mut(i).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Result<Node> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .as_slice()
            .iter()
            .zip(self.value(b).as_slice())
            .map(|(x, y)| x * y)
            .collect();
        let value = DenseMatrix::from_vec(r, c, data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Node, factor: f64) -> Node {
        let value = self.value(a).map(|v| v * factor);
        self.push(value, Op::Scale(a, factor))
    }

    /// Multiplies row `r` of `x` by `weights[r, col]`, or by `weights[0, col]`
    /// for every row when `weights` has a single row.
    pub fn scale_by_column(&mut self, x: Node, weights: Node, col: usize) -> Result<Node> {
        let (r, _) = self.shape(x);
        let (wr, wc) = self.shape(weights);
        if col >= wc || (wr != 1 && wr != r) {
            return Err(Error::shape(
                "scale_by_column",
                format!("weights {wr}x{wc}, column {col}, {r} rows"),
            ));
        }
        let w = self.value(weights).clone();
        let mut value = self.value(x).clone();
        for i in 0..r {
            let f = w.get(if wr == 1 { 0 } else { i }, col);
            value.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        Ok(self.push(value, Op::ScaleColumn { x, weights, col }))
    }

    pub fn silu(&mut self, a: Node) -> Node {
        let value = self.value(a).map(silu);
        self.push(value, Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Node) -> Node {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Node) -> Node {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: Node) -> Node {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Per-element spline map:
    /// `out[r, o] = Σ_i s[i, o] · Σ_k coef[i, o·nb + k] · B_k(clamp(input_scale · x[r, i]))`
    /// where `nb` is the grid's basis count and `s ≡ 1` when `scale` is `None`.
    pub fn spline(
        &mut self,
        x: Node,
        coef: Node,
        scale: Option<Node>,
        grid: &SplineGrid,
        input_scale: f64,
    ) -> Result<Node> {
        let (rows, d_in) = self.shape(x);
        let (cr, cc) = self.shape(coef);
        let nb = grid.basis_count();
        if cr != d_in || cc % nb != 0 || cc == 0 {
            return Err(Error::shape(
                "spline",
                format!("coefficients {cr}x{cc} for input width {d_in}, {nb} basis functions"),
            ));
        }
        let d_out = cc / nb;
        if let Some(s) = scale {
            if self.shape(s) != (d_in, d_out) {
                return Err(Error::shape(
                    "spline",
                    format!("scale {:?} for {d_in}x{d_out}", self.shape(s)),
                ));
            }
        }
        let width = grid.order() + 1;
        let mut starts = Vec::with_capacity(rows * d_in);
        let mut vals = vec![0.0; rows * d_in * width];
        let mut ders = vec![0.0; rows * d_in * width];
        let (lo, hi) = (grid.lo(), grid.hi());
        {
            let xv = self.value(x);
            let (mut bv, mut bd) = ([0.0; MAX_ORDER + 1], [0.0; MAX_ORDER + 1]);
            for r in 0..rows {
                for i in 0..d_in {
                    let z = input_scale * xv.get(r, i);
                    let start = grid.nonzero_basis_with_derivative(z, &mut bv, &mut bd);
                    let slot = (r * d_in + i) * width;
                    vals[slot..slot + width].copy_from_slice(&bv[..width]);
                    // clamped inputs have zero derivative
                    if z > lo && z < hi {
                        for m in 0..width {
                            ders[slot + m] = bd[m] * input_scale;
                        }
                    }
                    starts.push(start);
                }
            }
        }
        let mut out = DenseMatrix::zeros(rows, d_out);
        {
            let cv = self.value(coef);
            let sv = scale.map(|s| self.value(s));
            for r in 0..rows {
                for i in 0..d_in {
                    let slot = (r * d_in + i) * width;
                    let start = starts[r * d_in + i];
                    let b = &vals[slot..slot + width];
                    let crow = cv.row(i);
                    let orow = out.row_mut(r);
                    for o in 0..d_out {
                        let base = o * nb + start;
                        let mut acc = dot(&crow[base..base + width], b);
                        if let Some(sv) = sv {
                            acc *= sv.get(i, o);
                        }
                        orow[o] += acc;
                    }
                }
            }
        }
        let record = SplineRecord {
            x,
            coef,
            scale,
            d_out,
            basis_count: nb,
            width,
            starts,
            vals,
            ders,
        };
        Ok(self.push(out, Op::Spline(Box::new(record))))
    }

    pub fn concat_cols(&mut self, parts: &[Node]) -> Result<Node> {
        let refs: Vec<&DenseMatrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = DenseMatrix::hcat(&refs)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn sum_all(&mut self, a: Node) -> Node {
        let total = self.value(a).as_slice().iter().sum();
        self.push(DenseMatrix::scalar(total), Op::SumAll(a))
    }

    /// Column means, as a `1 x c` row.
    pub fn mean_rows(&mut self, a: Node) -> Node {
        let m = self.value(a);
        let (r, c) = m.shape();
        let mut out = DenseMatrix::zeros(1, c);
        for i in 0..r {
            for (o, v) in out.row_mut(0).iter_mut().zip(m.row(i)) {
                *o += v;
            }
        }
        let inv = if r == 0 { 0.0 } else { 1.0 / r as f64 };
        out.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
        self.push(out, Op::MeanRows(a))
    }

    pub fn gather_rows(&mut self, x: Node, index: Vec<usize>) -> Result<Node> {
        let m = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= m.rows()) {
            return Err(Error::Request(format!(
                "row index {bad} out of range for {} rows",
                m.rows()
            )));
        }
        let mut out = DenseMatrix::zeros(index.len(), m.cols());
        for (k, &i) in index.iter().enumerate() {
            out.row_mut(k).copy_from_slice(m.row(i));
        }
        Ok(self.push(out, Op::GatherRows { x, index }))
    }

    /// Row-wise inner products of two equally shaped matrices, `n x 1`.
    pub fn row_dot(&mut self, a: Node, b: Node) -> Result<Node> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("row_dot", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let (ma, mb) = (self.value(a), self.value(b));
        let data = (0..ma.rows()).map(|r| dot(ma.row(r), mb.row(r))).collect();
        let value = DenseMatrix::from_vec(ma.rows(), 1, data)?;
        Ok(self.push(value, Op::RowDot(a, b)))
    }

    /// Mean binary cross-entropy of probabilities `p` (an `n x 1` column)
    /// against `labels`, with probabilities clamped to `[eps, 1 - eps]`.
    pub fn bce(&mut self, p: Node, labels: Vec<f64>, eps: f64) -> Result<Node> {
        if labels.is_empty() {
            return Err(Error::Usage("binary cross-entropy over an empty batch".into()));
        }
        if self.shape(p) != (labels.len(), 1) {
            return Err(Error::shape(
                "bce",
                format!("{:?} probabilities for {} labels", self.shape(p), labels.len()),
            ));
        }
        let loss = self
            .value(p)
            .as_slice()
            .iter()
            .zip(&labels)
            .map(|(&q, &y)| {
                let q = q.clamp(eps, 1.0 - eps);
                -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
            })
            .sum::<f64>()
            / labels.len() as f64;
        Ok(self.push(DenseMatrix::scalar(loss), Op::Bce { p, labels, eps }))
    }

    /// Zeroes every gradient in `params`, then accumulates `∂loss/∂param`
    /// for all parameters reachable from `loss`.
    pub fn backward(&self, loss: Node, params: &mut ParamStore) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Usage(
                "backward called for a node that was never recorded".into(),
            ));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        params.zero_grad();
        let mut grads: Vec<Option<DenseMatrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let entry = &self.nodes[idx];
            match &entry.op {
                Op::Constant => {}
                Op::Param(id) => params.get_mut(*id).grad.add_assign(&g),
                Op::Spmm { a, x } => accumulate(&mut grads, *x, a.t_spmm(&g)?),
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    let mut db = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *row, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = elementwise(&g, self.value(*b), |g, v| g * v);
                    let db = elementwise(&g, self.value(*a), |g, v| g * v);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.map(|v| v * f)),
                Op::ScaleColumn { x, weights, col } => {
                    let xv = self.value(*x);
                    let w = self.value(*weights);
                    let broadcast = w.rows() == 1;
                    let mut dx = g.clone();
                    let mut dw = DenseMatrix::zeros(w.rows(), w.cols());
                    for r in 0..g.rows() {
                        let wr = if broadcast { 0 } else { r };
                        let f = w.get(wr, *col);
                        dx.row_mut(r).iter_mut().for_each(|v| *v *= f);
                        let contrib = dot(g.row(r), xv.row(r));
                        let cur = dw.get(wr, *col);
                        dw.set(wr, *col, cur + contrib);
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *weights, dw);
                }
                Op::Silu(a) => {
                    let da = elementwise(&g, self.value(*a), |g, x| g * silu_grad(x));
                    accumulate(&mut grads, *a, da);
                }
                Op::Sigmoid(a) => {
                    let da = elementwise(&g, &entry.value, |g, s| g * s * (1.0 - s));
                    accumulate(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let da = elementwise(&g, &entry.value, |g, t| g * (1.0 - t * t));
                    accumulate(&mut grads, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &entry.value;
                    let mut da = DenseMatrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let inner = dot(g.row(r), y.row(r));
                        for (c, d) in da.row_mut(r).iter_mut().enumerate() {
                            *d = y.get(r, c) * (g.get(r, c) - inner);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Spline(rec) => self.spline_backward(rec, &g, &mut grads),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let part = DenseMatrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                        accumulate(&mut grads, p, part);
                        offset += w;
                    }
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, DenseMatrix::filled(r, c, g.item()));
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.shape(*a);
                    let inv = 1.0 / r as f64;
                    let da = DenseMatrix::from_fn(r, c, |_, j| g.get(0, j) * inv);
                    accumulate(&mut grads, *a, da);
                }
                Op::GatherRows { x, index } => {
                    let (r, c) = self.shape(*x);
                    let mut dx = DenseMatrix::zeros(r, c);
                    for (k, &i) in index.iter().enumerate() {
                        for (d, v) in dx.row_mut(i).iter_mut().zip(g.row(k)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::RowDot(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let da = DenseMatrix::from_fn(va.rows(), va.cols(), |r, c| g.get(r, 0) * vb.get(r, c));
                    let db = DenseMatrix::from_fn(va.rows(), va.cols(), |r, c| g.get(r, 0) * va.get(r, c));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Bce { p, labels, eps } => {
                    let pv = self.value(*p);
                    let n = labels.len() as f64;
                    let scale = g.item() / n;
                    let data = pv
                        .as_slice()
                        .iter()
                        .zip(labels)
                        .map(|(&q, &y)| {
                            if q <= *eps || q >= 1.0 - *eps {
                                0.0
                            } else {
                                -scale * (y / q - (1.0 - y) / (1.0 - q))
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *p, DenseMatrix::from_vec(labels.len(), 1, data)?);
                }
            }
        }
        Ok(())
    }

    fn spline_backward(&self, rec: &SplineRecord, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        let (rows, d_in) = self.shape(rec.x);
        let (width, nb, d_out) = (rec.width, rec.basis_count, rec.d_out);
        let coef = self.value(rec.coef);
        let scale = rec.scale.map(|s| self.value(s));
        let mut dcoef = DenseMatrix::zeros(coef.rows(), coef.cols());
        let mut dscale = scale.map(|s| DenseMatrix::zeros(s.rows(), s.cols()));
        let mut dx = DenseMatrix::zeros(rows, d_in);
        for r in 0..rows {
            let grow = g.row(r);
            for i in 0..d_in {
                let slot = (r * d_in + i) * width;
                let start = rec.starts[r * d_in + i];
                let b = &rec.vals[slot..slot + width];
                let db = &rec.ders[slot..slot + width];
                let has_der = db.iter().any(|&v| v != 0.0);
                let crow = coef.row(i);
                let mut dxi = 0.0;
                for o in 0..d_out {
                    let go = grow[o];
                    if go == 0.0 {
                        continue;
                    }
                    let base = o * nb + start;
                    let s = scale.map_or(1.0, |s| s.get(i, o));
                    let dst = &mut dcoef.row_mut(i)[base..base + width];
                    for m in 0..width {
                        dst[m] += go * s * b[m];
                    }
                    if let Some(ds) = dscale.as_mut() {
                        let cur = ds.get(i, o);
                        ds.set(i, o, cur + go * dot(&crow[base..base + width], b));
                    }
                    if has_der {
                        dxi += go * s * dot(&crow[base..base + width], db);
                    }
                }
                dx.set(r, i, dxi);
            }
        }
        accumulate(grads, rec.coef, dcoef);
        if let (Some(node), Some(ds)) = (rec.scale, dscale) {
            accumulate(grads, node, ds);
        }
        accumulate(grads, rec.x, dx);
    }
}

fn elementwise(g: &DenseMatrix, v: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
    let data = g.as_slice().iter().zip(v.as_slice()).map(|(&a, &b)| f(a, b)).collect();
    DenseMatrix::from_vec(g.rows(), g.cols(), data).expect("same shape")
}

fn accumulate(grads: &mut [Option<DenseMatrix>], node: Node, g: DenseMatrix) {
    match &mut grads[node.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
