//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Tape`] borrows a [`ParamStore`] for the duration of one forward pass.
//! Operations are evaluated eagerly and recorded in creation order, which is
//! a topological order; [`Tape::backward`] walks it in reverse and deposits
//! parameter gradients into a [`ParamGrads`].

use crate::error::{Error, Result};
use crate::numerics::{ParamGrads, ParamId, ParamStore, Scalar};

/// Smallest probability used inside the log of the cross-entropy loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu(NodeId, T),
    SoftmaxRows(NodeId),
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
    RowScale(NodeId, NodeId),
    RowSum(NodeId),
    Mean(NodeId),
    WeightedCrossEntropy {
        probs: NodeId,
        gold: Vec<usize>,
        weights: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    rows: usize,
    cols: usize,
    // `None` for parameters, whose values live in the store.
    value: Option<Vec<T>>,
    op: Op<T>,
}

/// Record of a single forward computation.
pub struct Tape<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    clamped: usize,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            clamped: 0,
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// How many gold probabilities were clamped at [`PROB_FLOOR`].
    pub fn clamped_probabilities(&self) -> usize {
        self.clamped
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(pid)) => self.params.get(*pid).data(),
            _ => unreachable!("only parameters are stored by reference"),
        }
    }

    /// Copies a node's value out as a row-major matrix.
    pub fn to_rows(&self, id: NodeId) -> Vec<Vec<T>> {
        let (_, c) = self.shape(id);
        self.value(id).chunks(c.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn scalar(&self, id: NodeId) -> T {
        self.value(id)[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>) -> NodeId {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value: Some(value),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<T>) -> Result<NodeId> {
        if rows * cols != value.len() {
            return Err(Error::Shape {
                op: "constant",
                left: vec![rows, cols],
                right: vec![value.len()],
            });
        }
        Ok(self.push(rows, cols, value, Op::Constant))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(rows, cols, vec![T::zero(); rows * cols], Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let (rows, cols) = self.params.get(id).dims2();
        self.nodes.push(Node {
            rows,
            cols,
            value: None,
            op: Op::Param(id),
        });
        NodeId(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op,
                left: vec![sa.0, sa.1],
                right: vec![sb.0, sb.1],
            });
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (p, q) = self.shape(a);
        let (q2, r) = self.shape(b);
        if q != q2 {
            return Err(Error::Shape {
                op: "matmul",
                left: vec![p, q],
                right: vec![q2, r],
            });
        }
        let out = matmul_nn(self.value(a), self.value(b), p, q, r);
        Ok(self.push(p, r, out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    /// Adds a `1×k` row vector to every row of an `m×k` matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape(a);
        if self.shape(row) != (1, k) {
            let s = self.shape(row);
            return Err(Error::Shape {
                op: "add_row",
                left: vec![m, k],
                right: vec![s.0, s.1],
            });
        }
        let bias = self.value(row);
        let out = self
            .value(a)
            .chunks(k.max(1))
            .flat_map(|r| r.iter().zip(bias).map(|(&x, &b)| x + b))
            .collect();
        Ok(self.push(m, k, out, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(r, c, out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| x.tanh()).collect();
        self.push(r, c, out, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: T) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .map(|&x| if x > T::zero() { x } else { slope * x })
            .collect();
        self.push(r, c, out, Op::LeakyRelu(a, slope))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let mut out = Vec::with_capacity(r * c);
        for row in self.value(a).chunks(c.max(1)) {
            softmax_into(row, &mut out);
        }
        self.push(r, c, out, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = transpose(self.value(a), r, c);
        self.push(c, r, out, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: vec![rows],
                    right: vec![r],
                });
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(rows, total, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = parts.first().map_or(0, |&p| self.shape(p).1);
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    left: vec![cols],
                    right: vec![c],
                });
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(rows, cols, out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(Error::Shape {
                op: "slice_cols",
                left: vec![r, c],
                right: vec![start, len],
            });
        }
        let out = self
            .value(a)
            .chunks(c.max(1))
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self.push(r, len, out, Op::SliceCols(a, start)))
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::Shape {
                op: "gather_rows",
                left: vec![r, c],
                right: vec![bad],
            });
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        Ok(self.push(indices.len(), c, out, Op::GatherRows(a, indices.to_vec())))
    }

    /// Scales row `i` of `a` (m×k) by `s[i]` (m×1).
    pub fn row_scale(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape(a);
        if self.shape(s) != (m, 1) {
            let ss = self.shape(s);
            return Err(Error::Shape {
                op: "row_scale",
                left: vec![m, k],
                right: vec![ss.0, ss.1],
            });
        }
        let scale = self.value(s);
        let out = self
            .value(a)
            .chunks(k.max(1))
            .zip(scale)
            .flat_map(|(row, &f)| row.iter().map(move |&x| x * f))
            .collect();
        Ok(self.push(m, k, out, Op::RowScale(a, s)))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let (m, k) = self.shape(a);
        let out = self
            .value(a)
            .chunks(k.max(1))
            .map(|row| row.iter().copied().sum())
            .collect();
        self.push(m, 1, out, Op::RowSum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let n = T::of(v.len() as f64);
        let s: T = v.iter().copied().sum();
        self.push(1, 1, vec![s / n], Op::Mean(a))
    }

    /// Mean over rows of `-w[gold] * ln(probs[gold])`.
    pub fn weighted_cross_entropy(
        &mut self,
        probs: NodeId,
        gold: &[usize],
        weights: &[T],
    ) -> Result<NodeId> {
        let (m, k) = self.shape(probs);
        if gold.len() != m || weights.len() != k || m == 0 {
            return Err(Error::Shape {
                op: "weighted_cross_entropy",
                left: vec![m, k],
                right: vec![gold.len(), weights.len()],
            });
        }
        if let Some(&g) = gold.iter().find(|&&g| g >= k) {
            return Err(Error::Invalid(format!("gold class {g} outside 0..{k}")));
        }
        let floor = T::of(PROB_FLOOR);
        let p = self.value(probs);
        let mut total = T::zero();
        let mut clamped = 0;
        for (i, &g) in gold.iter().enumerate() {
            let mut q = p[i * k + g];
            if q < floor {
                q = floor;
                clamped += 1;
            }
            total -= weights[g] * q.ln();
        }
        if clamped > 0 {
            log::warn!("{clamped} gold probabilities clamped at {PROB_FLOOR}");
        }
        self.clamped += clamped;
        let loss = total / T::of(m as f64);
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::WeightedCrossEntropy {
                probs,
                gold: gold.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }

    /// Back-propagates from a scalar loss; see [`Tape::backward_scaled`].
    pub fn backward(self, loss: NodeId) -> Result<ParamGrads<T>> {
        let mut grads = ParamGrads::for_store(self.params);
        self.backward_scaled(loss, T::one(), &mut grads)?;
        Ok(grads)
    }

    /// Accumulates `scale * d(loss)/d(param)` into `grads` and consumes the tape.
    pub fn backward_scaled(self, loss: NodeId, scale: T, grads: &mut ParamGrads<T>) -> Result<()> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarLoss(vec![r, c]));
        }
        let mut g: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        g.resize_with(loss.0 + 1, || None);
        g[loss.0] = Some(vec![scale]);

        for i in (0..=loss.0).rev() {
            let Some(gy) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let mut sink = Sink {
                tape: &self,
                g: &mut g,
                grads,
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    let buf = sink.grads.buffer(*pid);
                    for (b, &d) in buf.iter_mut().zip(&gy) {
                        *b += d;
                    }
                }
                Op::MatMul(a, b) => {
                    let (p, q) = self.shape(*a);
                    let r = node.cols;
                    // dA = dY·Bᵀ, dB = Aᵀ·dY
                    let da = matmul_nt(&gy, self.value(*b), p, r, q);
                    sink.add(*a, &da);
                    let db = matmul_tn(self.value(*a), &gy, p, q, r);
                    sink.add(*b, &db);
                }
                Op::Add(a, b) => {
                    sink.add(*a, &gy);
                    sink.add(*b, &gy);
                }
                Op::AddRow(a, row) => {
                    sink.add(*a, &gy);
                    let k = node.cols;
                    let mut db = vec![T::zero(); k];
                    for chunk in gy.chunks(k.max(1)) {
                        for (d, &v) in db.iter_mut().zip(chunk) {
                            *d += v;
                        }
                    }
                    sink.add(*row, &db);
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&gy, self.value(*b), |d, y| d * y);
                    let db = zip_map(&gy, self.value(*a), |d, x| d * x);
                    sink.add(*a, &da);
                    sink.add(*b, &db);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    let da = zip_map(&gy, y, |d, s| d * s * (T::one() - s));
                    sink.add(*a, &da);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    let da = zip_map(&gy, y, |d, t| d * (T::one() - t * t));
                    sink.add(*a, &da);
                }
                Op::LeakyRelu(a, slope) => {
                    let slope = *slope;
                    let da = zip_map(&gy, self.value(*a), |d, x| {
                        if x > T::zero() {
                            d
                        } else {
                            d * slope
                        }
                    });
                    sink.add(*a, &da);
                }
                Op::SoftmaxRows(a) => {
                    let y = node.value.as_ref().unwrap();
                    let k = node.cols.max(1);
                    let mut da = Vec::with_capacity(y.len());
                    for (yr, dr) in y.chunks(k).zip(gy.chunks(k)) {
                        let dot: T = yr.iter().zip(dr).map(|(&s, &d)| s * d).sum();
                        da.extend(yr.iter().zip(dr).map(|(&s, &d)| s * (d - dot)));
                    }
                    sink.add(*a, &da);
                }
                Op::Transpose(a) => {
                    let da = transpose(&gy, node.rows, node.cols);
                    sink.add(*a, &da);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    let total = node.cols;
                    for &p in parts {
                        let c = self.shape(p).1;
                        let mut dp = Vec::with_capacity(node.rows * c);
                        for row in gy.chunks(total.max(1)) {
                            dp.extend_from_slice(&row[offset..offset + c]);
                        }
                        sink.add(p, &dp);
                        offset += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].rows * self.nodes[p.0].cols;
                        sink.add(p, &gy[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let len = node.cols;
                    let target = sink.target(*a);
                    for row in 0..r {
                        for j in 0..len {
                            target[row * c + start + j] += gy[row * len + j];
                        }
                    }
                }
                Op::GatherRows(a, indices) => {
                    let c = node.cols;
                    let target = sink.target(*a);
                    for (out_row, &src_row) in indices.iter().enumerate() {
                        for j in 0..c {
                            target[src_row * c + j] += gy[out_row * c + j];
                        }
                    }
                }
                Op::RowScale(a, s) => {
                    let k = node.cols.max(1);
                    let scale = self.value(*s);
                    let x = self.value(*a);
                    let mut da = Vec::with_capacity(gy.len());
                    let mut ds = Vec::with_capacity(scale.len());
                    for ((dr, xr), &f) in gy.chunks(k).zip(x.chunks(k)).zip(scale) {
                        da.extend(dr.iter().map(|&d| d * f));
                        ds.push(dr.iter().zip(xr).map(|(&d, &v)| d * v).sum());
                    }
                    sink.add(*a, &da);
                    sink.add(*s, &ds);
                }
                Op::RowSum(a) => {
                    let (r, k) = self.shape(*a);
                    let mut da = Vec::with_capacity(r * k);
                    for &d in &gy {
                        da.extend(std::iter::repeat(d).take(k));
                    }
                    sink.add(*a, &da);
                }
                Op::Mean(a) => {
                    let (r, k) = self.shape(*a);
                    let d = gy[0] / T::of((r * k) as f64);
                    sink.add(*a, &vec![d; r * k]);
                }
                Op::WeightedCrossEntropy {
                    probs,
                    gold,
                    weights,
                } => {
                    let (m, k) = self.shape(*probs);
                    let floor = T::of(PROB_FLOOR);
                    let p = self.value(*probs);
                    let mut dp = vec![T::zero(); m * k];
                    let inv_m = gy[0] / T::of(m as f64);
                    for (i, &g) in gold.iter().enumerate() {
                        let q = p[i * k + g];
                        // Clamped entries are constant in the loss.
                        if q >= floor {
                            dp[i * k + g] = -weights[g] * inv_m / q;
                        }
                    }
                    sink.add(*probs, &dp);
                }
            }
        }
        Ok(())
    }
}

/// Routes a gradient contribution either to a parameter buffer or to the
/// pending gradient of an intermediate node.
struct Sink<'a, 'p, T> {
    tape: &'a Tape<'p, T>,
    g: &'a mut Vec<Option<Vec<T>>>,
    grads: &'a mut ParamGrads<T>,
}

impl<T: Scalar> Sink<'_, '_, T> {
    fn target(&mut self, id: NodeId) -> &mut [T] {
        let node = &self.tape.nodes[id.0];
        match node.op {
            Op::Param(pid) => self.grads.buffer(pid),
            _ => {
                let n = node.rows * node.cols;
                self.g[id.0].get_or_insert_with(|| vec![T::zero(); n])
            }
        }
    }

    fn add(&mut self, id: NodeId, delta: &[T]) {
        if matches!(self.tape.nodes[id.0].op, Op::Constant) {
            return;
        }
        let target = self.target(id);
        for (t, &d) in target.iter_mut().zip(delta) {
            *t += d;
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn softmax_into<T: Scalar>(row: &[T], out: &mut Vec<T>) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let start = out.len();
    let mut sum = T::zero();
    for &x in row {
        let e = (x - max).exp();
        sum += e;
        out.push(e);
    }
    for v in &mut out[start..] {
        *v /= sum;
    }
}

fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// `a` (p×q) · `b` (q×r).
fn matmul_nn<T: Scalar>(a: &[T], b: &[T], p: usize, q: usize, r: usize) -> Vec<T> {
    let mut out = vec![T::zero(); p * r];
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let x = a[i * q + k];
            if x == T::zero() {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}

/// `a` (p×r) · `b`ᵀ where `b` is q×r; result p×q.
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], p: usize, r: usize, q: usize) -> Vec<T> {
    let mut out = vec![T::zero(); p * q];
    for i in 0..p {
        let arow = &a[i * r..(i + 1) * r];
        for j in 0..q {
            let brow = &b[j * r..(j + 1) * r];
            out[i * q + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

/// `a`ᵀ · `b` where `a` is p×q and `b` is p×r; result q×r.
fn matmul_tn<T: Scalar>(a: &[T], b: &[T], p: usize, q: usize, r: usize) -> Vec<T> {
    let mut out = vec![T::zero(); q * r];
    for i in 0..p {
        let brow = &b[i * r..(i + 1) * r];
        for k in 0..q {
            let x = a[i * q + k];
            if x == T::zero() {
                continue;
            }
            let orow = &mut out[k * r..(k + 1) * r];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}
