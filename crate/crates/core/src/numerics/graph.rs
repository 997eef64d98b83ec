//! Matrix-valued reverse-mode differentiation.
//!
//! A [`DiffGraph`] is a Wengert list: every operation appends a node holding
//! its forward value, so node order is already a topological order and the
//! backward pass is a single reverse sweep. Nodes are matrices rather than
//! scalars; that keeps the tape short (tens of nodes per mini-batch) while
//! each node does dense work.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Handle to a node in a [`DiffGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Arguments of `acos` are clamped to `[-1 + ACOS_CLAMP, 1 - ACOS_CLAMP]`
/// before both the value and the derivative are evaluated.
pub const ACOS_CLAMP: f64 = 1e-7;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `a · aᵀ`
    Gram(NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// `a + 1 · bias` with `bias` a `1 x cols` row.
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    ScaleRows(NodeId, Vec<f64>),
    SumAll(NodeId),
    /// Rows divided by their norm; rows with norm below the floor map to zero
    /// and pass no gradient.
    RowNormalize {
        input: NodeId,
        norms: Vec<f64>,
        floor: f64,
    },
    /// Column vector of selected `(row, col)` entries.
    Gather {
        input: NodeId,
        entries: Vec<(usize, usize)>,
    },
    Acos(NodeId),
    /// Weighted mean softmax cross-entropy; caches the softmax.
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        weights: Vec<f64>,
        probs: DenseMatrix,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: DenseMatrix,
    needs_grad: bool,
}

/// Adjoints of the leaves that require gradients, from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the output with respect to `node`. Nodes the output does
    /// not depend on get a zero matrix.
    pub fn get(&self, node: NodeId) -> DenseMatrix {
        match self.adjoints.get(node.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[node.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, node: NodeId) -> DenseMatrix {
        match self.adjoints.get_mut(node.0).and_then(Option::take) {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[node.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

/// Single-threaded tape of matrix operations.
#[derive(Debug, Default)]
pub struct DiffGraph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl DiffGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &DenseMatrix {
        &self.nodes[node.0].value
    }

    /// Allows another backward pass on the same graph.
    pub fn reset(&mut self) {
        self.backward_done = false;
    }

    fn push(&mut self, op: Op, value: DenseMatrix, needs_grad: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value produced by {:?}",
                op_name(&op)
            )));
        }
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn needs(&self, a: NodeId) -> bool {
        self.nodes[a.0].needs_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::MatMul(a, b), v, ng)
    }

    pub fn gram(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_t(self.value(a))?;
        let ng = self.needs(a);
        self.push(Op::Gram(a), v, ng)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose();
        let ng = self.needs(a);
        self.push(Op::Transpose(a), v, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::Add(a, b), v, ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::Sub(a, b), v, ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::Mul(a, b), v, ng)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let v = self.value(a).scale(factor);
        let ng = self.needs(a);
        self.push(Op::Scale(a, factor), v, ng)
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::Shape(format!(
                "row broadcast of {}x{} onto {}x{}",
                b.rows(),
                b.cols(),
                x.rows(),
                x.cols()
            )));
        }
        let mut v = x.clone();
        for r in 0..v.rows() {
            for (o, bv) in v.row_mut(r).iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        let ng = self.needs(a) || self.needs(bias);
        self.push(Op::AddRow(a, bias), v, ng)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.max(0.0));
        let ng = self.needs(a);
        self.push(Op::Relu(a), v, ng)
    }

    pub fn scale_rows(&mut self, a: NodeId, factors: Vec<f64>) -> Result<NodeId> {
        let x = self.value(a);
        if factors.len() != x.rows() {
            return Err(Error::Shape(format!(
                "{} row factors for {} rows",
                factors.len(),
                x.rows()
            )));
        }
        let mut v = x.clone();
        for (r, f) in factors.iter().enumerate() {
            v.row_mut(r).iter_mut().for_each(|e| *e *= f);
        }
        let ng = self.needs(a);
        self.push(Op::ScaleRows(a, factors), v, ng)
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let v = DenseMatrix::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(Op::SumAll(a), v, ng)
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).data().len();
        if n == 0 {
            return Err(Error::Shape("mean of empty matrix".into()));
        }
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn row_normalize(&mut self, a: NodeId, floor: f64) -> Result<NodeId> {
        let x = self.value(a);
        let mut v = x.clone();
        let mut norms = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let n = super::matrix::norm(x.row(r));
            norms.push(n);
            let row = v.row_mut(r);
            if n < floor {
                row.iter_mut().for_each(|e| *e = 0.0);
            } else {
                row.iter_mut().for_each(|e| *e /= n);
            }
        }
        let ng = self.needs(a);
        self.push(
            Op::RowNormalize {
                input: a,
                norms,
                floor,
            },
            v,
            ng,
        )
    }

    pub fn gather(&mut self, a: NodeId, entries: Vec<(usize, usize)>) -> Result<NodeId> {
        let x = self.value(a);
        let mut vals = Vec::with_capacity(entries.len());
        for &(r, c) in &entries {
            if r >= x.rows() || c >= x.cols() {
                return Err(Error::Shape(format!(
                    "gather ({r},{c}) out of {}x{}",
                    x.rows(),
                    x.cols()
                )));
            }
            vals.push(x[(r, c)]);
        }
        let v = DenseMatrix::from_vec(vals.len(), 1, vals)?;
        let ng = self.needs(a);
        self.push(Op::Gather { input: a, entries }, v, ng)
    }

    pub fn acos(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| clamp_unit(x).acos());
        let ng = self.needs(a);
        self.push(Op::Acos(a), v, ng)
    }

    /// Mean over rows of `w[y_i] · (logsumexp(z_i) − z_{i,y_i})`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        weights: &[f64],
    ) -> Result<NodeId> {
        let z = self.value(logits);
        let (n, k) = z.shape();
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if weights.len() != k {
            return Err(Error::Shape(format!(
                "{} weights for {k} classes",
                weights.len()
            )));
        }
        if n == 0 {
            return Err(Error::Shape("cross-entropy over zero rows".into()));
        }
        let mut probs = DenseMatrix::zeros(n, k);
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::InvalidInput(format!(
                    "label {y} out of range for {k} classes"
                )));
            }
            let row = z.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (p, v) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (v - max).exp();
                denom += *p;
            }
            probs.row_mut(i).iter_mut().for_each(|p| *p /= denom);
            let lse = max + denom.ln();
            total += weights[y] * (lse - row[y]);
        }
        let v = DenseMatrix::scalar(total / n as f64);
        let ng = self.needs(logits);
        self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            v,
            ng,
        )
    }

    /// Reverse sweep from a scalar output. Errors on a non-scalar output or
    /// a second call without [`DiffGraph::reset`].
    pub fn backward(&mut self, output: NodeId) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Graph(
                "backward already ran on this graph; call reset first".into(),
            ));
        }
        let out = &self.nodes[output.0].value;
        if out.shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {}x{}",
                out.rows(),
                out.cols()
            )));
        }
        self.backward_done = true;

        let mut adj: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(DenseMatrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                adj[idx] = Some(g);
                continue;
            }
            for (parent, contrib) in self.local_grads(idx, &g)? {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut adj[parent.0] {
                    Some(acc) => acc.add_assign(&contrib)?,
                    slot => *slot = Some(contrib),
                }
            }
        }

        // Only leaves keep their adjoints.
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.needs_grad {
                adj[i] = None;
            }
        }
        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn local_grads(&self, idx: usize, g: &DenseMatrix) -> Result<Vec<(NodeId, DenseMatrix)>> {
        let node = &self.nodes[idx];
        let val = |id: NodeId| &self.nodes[id.0].value;
        let wants = |id: NodeId| self.nodes[id.0].needs_grad;
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
            Op::Gram(a) => {
                let sym = g.add(&g.transpose())?;
                out.push((*a, sym.matmul(val(*a))?));
            }
            Op::Transpose(a) => out.push((*a, g.transpose())),
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.scale(-1.0)));
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    out.push((*a, g.hadamard(val(*b))?));
                }
                if wants(*b) {
                    out.push((*b, g.hadamard(val(*a))?));
                }
            }
            Op::Scale(a, f) => out.push((*a, g.scale(*f))),
            Op::AddRow(a, bias) => {
                out.push((*a, g.clone()));
                if wants(*bias) {
                    let mut col_sums = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, v) in col_sums.data_mut().iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    out.push((*bias, col_sums));
                }
            }
            Op::Relu(a) => {
                let x = val(*a);
                out.push((
                    *a,
                    g.zip_with(x, "relu", |gv, xv| if xv > 0.0 { gv } else { 0.0 })?,
                ));
            }
            Op::ScaleRows(a, factors) => {
                let mut d = g.clone();
                for (r, f) in factors.iter().enumerate() {
                    d.row_mut(r).iter_mut().for_each(|e| *e *= f);
                }
                out.push((*a, d));
            }
            Op::SumAll(a) => {
                let (r, c) = val(*a).shape();
                out.push((*a, DenseMatrix::filled(r, c, g.item()?)));
            }
            Op::RowNormalize {
                input,
                norms,
                floor,
            } => {
                let y = &node.value;
                let mut d = DenseMatrix::zeros(y.rows(), y.cols());
                for (r, &norm) in norms.iter().enumerate() {
                    if norm < *floor {
                        continue;
                    }
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let proj = super::matrix::dot(yr, gr);
                    for ((o, yv), gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = (gv - yv * proj) / norm;
                    }
                }
                out.push((*input, d));
            }
            Op::Gather { input, entries } => {
                let (r, c) = val(*input).shape();
                let mut d = DenseMatrix::zeros(r, c);
                for (i, &(er, ec)) in entries.iter().enumerate() {
                    d[(er, ec)] += g[(i, 0)];
                }
                out.push((*input, d));
            }
            Op::Acos(a) => {
                let x = val(*a);
                out.push((
                    *a,
                    g.zip_with(x, "acos", |gv, xv| {
                        let c = clamp_unit(xv);
                        -gv / (1.0 - c * c).sqrt()
                    })?,
                ));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                weights,
                probs,
            } => {
                let n = labels.len() as f64;
                let scale = g.item()? / n;
                let mut d = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    let w = weights[y] * scale;
                    let row = d.row_mut(i);
                    row[y] -= 1.0;
                    row.iter_mut().for_each(|e| *e *= w);
                }
                out.push((*logits, d));
            }
        }
        Ok(out)
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0 + ACOS_CLAMP, 1.0 - ACOS_CLAMP)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Gram(_) => "gram",
        Op::Transpose(_) => "transpose",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddRow(..) => "add_row",
        Op::Relu(_) => "relu",
        Op::ScaleRows(..) => "scale_rows",
        Op::SumAll(_) => "sum_all",
        Op::RowNormalize { .. } => "row_normalize",
        Op::Gather { .. } => "gather",
        Op::Acos(_) => "acos",
        Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
    }
}
