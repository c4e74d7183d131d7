//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so every node's operands precede
//! it and a single reverse sweep propagates adjoints. Besides the generic
//! matrix primitives the tape carries a few fused loss nodes (pairwise
//! fuzzy cross-entropy, weighted squared error, softmax cross-entropy)
//! whose backward rules are written out by hand.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Lower bound on squared embedding distances inside the pairwise loss.
const MIN_SQ_DIST: f64 = 1e-12;

/// Probability clamp used inside logarithms.
pub const LOG_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f32),
    Relu(NodeId),
    GatherRows(NodeId, Vec<usize>),
    SelectPerRow(NodeId, Vec<usize>),
    Sum(NodeId),
    SquaredNorm(NodeId),
    WeightedSquaredError { pred: NodeId, target: NodeId, weights: Matrix },
    PairCrossEntropy { emb: NodeId, pairs: Vec<(usize, usize)>, targets: Vec<f32>, a: f32, b: f32 },
    SoftmaxCrossEntropy { logits: NodeId, labels: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Records a computation for later differentiation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`; zeros when `id` does not reach the loss.
    pub fn get(&self, id: NodeId) -> Matrix {
        match &self.adjoints[id.0] {
            Some(m) => m.clone(),
            None => {
                let (r, c) = self.shapes[id.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn reached(&self, id: NodeId) -> bool {
        self.adjoints[id.0].is_some()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Adds a leaf (input or parameter).
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// Adds a 1×m row vector to every row of an n×m node.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::Dimension { op: "add_bias", expected: (1, av.cols()), found: bv.shape() });
        }
        let mut v = av.clone();
        let bias_row = bv.row(0).to_vec();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(&bias_row) {
                *x += b;
            }
        }
        Ok(self.push(Op::AddBias(a, bias), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, s: f32) -> NodeId {
        let v = self.value(a).scale(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        let src = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= src.rows()) {
            return Err(Error::Dimension { op: "gather_rows", expected: src.shape(), found: (bad, 0) });
        }
        let v = src.select_rows(&rows);
        Ok(self.push(Op::GatherRows(a, rows), v))
    }

    /// Picks entry `cols[i]` from row `i`, giving an n×1 node.
    pub fn select_per_row(&mut self, a: NodeId, cols: Vec<usize>) -> Result<NodeId> {
        let src = self.value(a);
        if cols.len() != src.rows() || cols.iter().any(|&c| c >= src.cols()) {
            return Err(Error::Dimension { op: "select_per_row", expected: src.shape(), found: (cols.len(), 1) });
        }
        let data = cols.iter().enumerate().map(|(i, &c)| src[(i, c)]).collect();
        let v = Matrix::from_vec(cols.len(), 1, data)?;
        Ok(self.push(Op::SelectPerRow(a, cols), v))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f32 = self.value(a).as_slice().iter().sum();
        self.push(Op::Sum(a), Matrix::scalar(s))
    }

    /// Squared Frobenius norm.
    pub fn squared_norm(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).frobenius_sq();
        self.push(Op::SquaredNorm(a), Matrix::scalar(s))
    }

    /// `(1 / (n·m)) · Σ w ⊙ (target − pred)²`. The weights are constants.
    pub fn weighted_squared_error(&mut self, pred: NodeId, target: NodeId, weights: Matrix) -> Result<NodeId> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() || p.shape() != weights.shape() {
            return Err(Error::Dimension { op: "weighted_squared_error", expected: p.shape(), found: weights.shape() });
        }
        let count = (p.rows() * p.cols()).max(1) as f64;
        let total: f64 = p
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .zip(weights.as_slice())
            .map(|((&p, &t), &w)| {
                let d = t as f64 - p as f64;
                w as f64 * d * d
            })
            .sum();
        Ok(self.push(Op::WeightedSquaredError { pred, target, weights }, Matrix::scalar((total / count) as f32)))
    }

    /// Mean binary cross-entropy between target memberships and
    /// `q = 1 / (1 + a·‖y_i − y_j‖^{2b})` over the listed row pairs of `emb`.
    pub fn pair_cross_entropy(
        &mut self,
        emb: NodeId,
        pairs: Vec<(usize, usize)>,
        targets: Vec<f32>,
        a: f32,
        b: f32,
    ) -> Result<NodeId> {
        let e = self.value(emb);
        if pairs.len() != targets.len() {
            return Err(Error::Dimension { op: "pair_cross_entropy", expected: (pairs.len(), 1), found: (targets.len(), 1) });
        }
        if pairs.iter().any(|&(i, j)| i >= e.rows() || j >= e.rows()) {
            return Err(Error::Dimension { op: "pair_cross_entropy", expected: e.shape(), found: (pairs.len(), 2) });
        }
        let mut total = 0.0f64;
        for (&(i, j), &p) in pairs.iter().zip(&targets) {
            let s = super::matrix::squared_distance(e.row(i), e.row(j));
            total += pair_terms(s, p as f64, a as f64, b as f64).0;
        }
        let mean = if pairs.is_empty() { 0.0 } else { total / pairs.len() as f64 };
        Ok(self.push(Op::PairCrossEntropy { emb, pairs, targets, a, b }, Matrix::scalar(mean as f32)))
    }

    /// Mean softmax cross-entropy of integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: Vec<usize>) -> Result<NodeId> {
        let z = self.value(logits);
        if labels.len() != z.rows() || labels.iter().any(|&l| l >= z.cols()) {
            return Err(Error::Dimension { op: "softmax_cross_entropy", expected: z.shape(), found: (labels.len(), 1) });
        }
        let mut total = 0.0f64;
        for (r, &l) in z.iter_rows().zip(&labels) {
            let (lse, _) = log_sum_exp(r);
            total += lse - r[l] as f64;
        }
        let mean = total / labels.len().max(1) as f64;
        Ok(self.push(Op::SoftmaxCrossEntropy { logits, labels }, Matrix::scalar(mean as f32)))
    }

    /// Propagates adjoints from a scalar loss node back through the tape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss { rows: lv.rows(), cols: lv.cols() });
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_transpose(self.value(*b))?;
                    let gb = self.value(*a).transpose_matmul(&g)?;
                    accumulate(&mut adj, *a, ga)?;
                    accumulate(&mut adj, *b, gb)?;
                }
                Op::AddBias(a, bias) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *bias, g.sum_rows())?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *b, g.scale(-1.0))?;
                }
                Op::Scale(a, s) => accumulate(&mut adj, *a, g.scale(*s))?,
                Op::Relu(a) => {
                    let ga = g.zip_map(&node.value, |gv, out| if out > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut adj, *a, ga)?;
                }
                Op::GatherRows(a, rows) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for (k, &r) in rows.iter().enumerate() {
                        for (dst, v) in ga.row_mut(r).iter_mut().zip(g.row(k)) {
                            *dst += v;
                        }
                    }
                    accumulate(&mut adj, *a, ga)?;
                }
                Op::SelectPerRow(a, cols) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for (i, &c) in cols.iter().enumerate() {
                        ga[(i, c)] = g[(i, 0)];
                    }
                    accumulate(&mut adj, *a, ga)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Matrix::filled(r, c, g[(0, 0)]))?;
                }
                Op::SquaredNorm(a) => {
                    let s = 2.0 * g[(0, 0)];
                    accumulate(&mut adj, *a, self.value(*a).scale(s))?;
                }
                Op::WeightedSquaredError { pred, target, weights } => {
                    let (p, t) = (self.value(*pred), self.value(*target));
                    let scale = 2.0 * g[(0, 0)] as f64 / (p.rows() * p.cols()).max(1) as f64;
                    let mut gp = Matrix::zeros(p.rows(), p.cols());
                    for (((o, &pv), &tv), &w) in gp
                        .as_mut_slice()
                        .iter_mut()
                        .zip(p.as_slice())
                        .zip(t.as_slice())
                        .zip(weights.as_slice())
                    {
                        *o = (scale * w as f64 * (pv as f64 - tv as f64)) as f32;
                    }
                    let gt = gp.scale(-1.0);
                    accumulate(&mut adj, *pred, gp)?;
                    accumulate(&mut adj, *target, gt)?;
                }
                Op::PairCrossEntropy { emb, pairs, targets, a, b } => {
                    let e = self.value(*emb);
                    let mut ge = Matrix::zeros(e.rows(), e.cols());
                    let scale = g[(0, 0)] as f64 / pairs.len().max(1) as f64;
                    for (&(i, j), &p) in pairs.iter().zip(targets) {
                        let s = super::matrix::squared_distance(e.row(i), e.row(j));
                        let d_ds = pair_terms(s, p as f64, *a as f64, *b as f64).1;
                        let coef = scale * d_ds * 2.0;
                        for m in 0..e.cols() {
                            let diff = e[(i, m)] as f64 - e[(j, m)] as f64;
                            let gv = (coef * diff) as f32;
                            ge[(i, m)] += gv;
                            ge[(j, m)] -= gv;
                        }
                    }
                    accumulate(&mut adj, *emb, ge)?;
                }
                Op::SoftmaxCrossEntropy { logits, labels } => {
                    let z = self.value(*logits);
                    let scale = g[(0, 0)] as f64 / labels.len().max(1) as f64;
                    let mut gz = Matrix::zeros(z.rows(), z.cols());
                    for (i, &l) in labels.iter().enumerate() {
                        let row = z.row(i);
                        let (lse, _) = log_sum_exp(row);
                        for (c, &v) in row.iter().enumerate() {
                            let p = libm::exp(v as f64 - lse);
                            let onehot = if c == l { 1.0 } else { 0.0 };
                            gz[(i, c)] = (scale * (p - onehot)) as f32;
                        }
                    }
                    accumulate(&mut adj, *logits, gz)?;
                }
            }
            adj[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { adjoints: adj, shapes })
    }
}

fn accumulate(adj: &mut [Option<Matrix>], id: NodeId, g: Matrix) -> Result<()> {
    match &mut adj[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Log-sum-exp of a row with max subtraction, returned with the max.
fn log_sum_exp(row: &[f32]) -> (f64, f64) {
    let m = row.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v as f64));
    let s: f64 = row.iter().map(|&v| libm::exp(v as f64 - m)).sum();
    (m + libm::log(s), m)
}

/// Per-pair loss value and its derivative with respect to the squared distance.
fn pair_terms(s: f64, p: f64, a: f64, b: f64) -> (f64, f64) {
    let clamped = s < MIN_SQ_DIST;
    let sc = if clamped { MIN_SQ_DIST } else { s };
    let sb = libm::pow(sc, b);
    let u = a * sb;
    let q = 1.0 / (1.0 + u);
    let one_minus_q = u / (1.0 + u);
    let (log_q, dlogq_du) = if q > LOG_EPS { (libm::log(q), -1.0 / (1.0 + u)) } else { (libm::log(LOG_EPS), 0.0) };
    let (log_1mq, dlog1mq_du) =
        if one_minus_q > LOG_EPS { (libm::log(one_minus_q), 1.0 / (u * (1.0 + u))) } else { (libm::log(LOG_EPS), 0.0) };
    let loss = -(p * log_q + (1.0 - p) * log_1mq);
    let dl_du = -(p * dlogq_du + (1.0 - p) * dlog1mq_du);
    let du_ds = if clamped { 0.0 } else { a * b * sb / sc };
    (loss, dl_du * du_ds)
}
