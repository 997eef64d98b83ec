//! Supervised losses, the within-class and between-class feature
//! regularizers, the combined objective and deferred re-weighting.
//!
//! Every loss comes in two forms: a `*_node` builder that records it on a
//! [`DiffGraph`] for training, and a plain function returning its value.

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, DiffGraph, NodeId};

/// Centered class means shorter than this are treated as degenerate: their
/// pairs contribute an angle of π/2 and no gradient.
pub const NORM_FLOOR: f64 = 1e-8;

/// Weights of the two regularizers and the epoch they switch on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub start_epoch: usize,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            start_epoch: 0,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "regularizer weights must be >= 0 (got {}, {})",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }

    pub fn active(&self, epoch: usize) -> bool {
        epoch >= self.start_epoch
    }
}

/// Positive per-class loss weights with mean 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0; num_classes])
    }

    /// Rescales `raw` to mean 1. All entries must be positive and finite.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(
                "class weights must be positive and finite".into(),
            ));
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        Ok(Self(raw.into_iter().map(|w| w / mean).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= num_classes) {
        Some(y) => Err(Error::InvalidInput(format!(
            "label {y} out of range for {num_classes} classes"
        ))),
        None => Ok(()),
    }
}

pub fn cross_entropy_node(
    g: &mut DiffGraph,
    logits: NodeId,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<NodeId> {
    g.softmax_cross_entropy(logits, labels, weights.as_slice())
}

/// Weighted mean of `w_y · (logsumexp(z) − z_y)` over rows.
pub fn cross_entropy(
    logits: &DenseMatrix,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<f64> {
    let mut g = DiffGraph::new();
    let z = g.constant(logits.clone());
    let l = cross_entropy_node(&mut g, z, labels, weights)?;
    g.value(l).item()
}

fn one_hot(labels: &[usize], num_classes: usize) -> DenseMatrix {
    let mut y = DenseMatrix::zeros(labels.len(), num_classes);
    for (i, &c) in labels.iter().enumerate() {
        y[(i, c)] = 1.0;
    }
    y
}

/// `(1/2n)·‖Y − Z‖²_F` against one-hot targets.
pub fn mse_node(g: &mut DiffGraph, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
    let (n, k) = g.value(logits).shape();
    if labels.len() != n || n == 0 {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    check_labels(labels, k)?;
    let y = g.constant(one_hot(labels, k));
    let diff = g.sub(logits, y)?;
    let sq = g.mul(diff, diff)?;
    let s = g.sum_all(sq)?;
    g.scale(s, 0.5 / n as f64)
}

pub fn mse_loss(logits: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    let mut g = DiffGraph::new();
    let z = g.constant(logits.clone());
    let l = mse_node(&mut g, z, labels)?;
    g.value(l).item()
}

/// Classes present in a mini-batch and their batch counts.
#[derive(Debug, Clone)]
pub struct BatchClasses {
    /// Present class ids, ascending.
    pub present: Vec<usize>,
    pub counts: Vec<usize>,
    /// Position in `present` of each row's label.
    pub slot: Vec<usize>,
}

impl BatchClasses {
    pub fn new(labels: &[usize]) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut counts_all = vec![0usize; k];
        for &y in labels {
            counts_all[y] += 1;
        }
        let mut index_of = vec![usize::MAX; k];
        let mut present = Vec::new();
        let mut counts = Vec::new();
        for (c, &n) in counts_all.iter().enumerate() {
            if n > 0 {
                index_of[c] = present.len();
                present.push(c);
                counts.push(n);
            }
        }
        let slot = labels.iter().map(|&y| index_of[y]).collect();
        Self {
            present,
            counts,
            slot,
        }
    }

    pub fn num_present(&self) -> usize {
        self.present.len()
    }

    /// `K_p x n` matrix whose product with `H` gives the class means.
    fn averaging_matrix(&self) -> DenseMatrix {
        let n = self.slot.len();
        let mut a = DenseMatrix::zeros(self.num_present(), n);
        for (i, &s) in self.slot.iter().enumerate() {
            a[(s, i)] = 1.0 / self.counts[s] as f64;
        }
        a
    }
}

/// `Σ_k Σ_{y_i=k} (1/n_k)·‖h_i − μ_k‖²` with batch means and batch counts.
pub fn within_class_node(g: &mut DiffGraph, h: NodeId, labels: &[usize]) -> Result<NodeId> {
    let n = g.value(h).rows();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let classes = BatchClasses::new(labels);
    let mut select = DenseMatrix::zeros(n, classes.num_present());
    for (i, &s) in classes.slot.iter().enumerate() {
        select[(i, s)] = 1.0;
    }
    let a = g.constant(classes.averaging_matrix());
    let s = g.constant(select);
    let means = g.matmul(a, h)?;
    let expanded = g.matmul(s, means)?;
    let diff = g.sub(h, expanded)?;
    let sq = g.mul(diff, diff)?;
    let inv_counts = classes
        .slot
        .iter()
        .map(|&s| 1.0 / classes.counts[s] as f64)
        .collect();
    let weighted = g.scale_rows(sq, inv_counts)?;
    g.sum_all(weighted)
}

pub fn within_class_reg(h: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    let mut g = DiffGraph::new();
    let hn = g.constant(h.clone());
    let l = within_class_node(&mut g, hn, labels)?;
    g.value(l).item()
}

/// Rows `μ_k − μ_C` for the classes present in the batch, where `μ_C` is the
/// mean of the present class means. Gradients flow through `μ_C`.
pub fn centered_means_node(g: &mut DiffGraph, h: NodeId, labels: &[usize]) -> Result<NodeId> {
    let n = g.value(h).rows();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let classes = BatchClasses::new(labels);
    let a = classes.averaging_matrix();
    let kp = classes.num_present() as f64;
    let col_mean = a.mean_rows();
    let centering = DenseMatrix::from_fn(a.rows(), a.cols(), |r, c| a[(r, c)] - col_mean[(0, c)]);
    debug_assert!((col_mean.sum() - 1.0).abs() < 1e-9 || kp == 0.0);
    let c = g.constant(centering);
    g.matmul(c, h)
}

/// For each row `k`, the other row with the largest cosine (smallest angle);
/// ties go to the smallest index.
fn nearest_pairs(gram: &DenseMatrix) -> Vec<(usize, usize)> {
    let k = gram.rows();
    (0..k)
        .map(|i| {
            let mut best: Option<usize> = None;
            for j in (0..k).filter(|&j| j != i) {
                if best.is_none_or(|b| gram[(i, j)] > gram[(i, b)]) {
                    best = Some(j);
                }
            }
            (i, best.expect("at least two rows"))
        })
        .collect()
}

/// `−(1/K) Σ_k min_{k'≠k} arccos(cos(μ̇_k, μ̇_k'))` over the rows of
/// `centered` (one centered class mean per row).
pub fn between_class_node(g: &mut DiffGraph, centered: NodeId) -> Result<NodeId> {
    let k = g.value(centered).rows();
    if k < 2 {
        return Err(Error::Spec(format!(
            "between-class term needs >= 2 classes, got {k}"
        )));
    }
    let unit = g.row_normalize(centered, NORM_FLOOR)?;
    let gram = g.gram(unit)?;
    let pairs = nearest_pairs(g.value(gram));
    let cos = g.gather(gram, pairs)?;
    let angles = g.acos(cos)?;
    let s = g.sum_all(angles)?;
    g.scale(s, -1.0 / k as f64)
}

pub fn between_class_reg(centered: &DenseMatrix) -> Result<f64> {
    let mut g = DiffGraph::new();
    let c = g.constant(centered.clone());
    let l = between_class_node(&mut g, c)?;
    g.value(l).item()
}

/// Supervised loss alone before `start_epoch`, the weighted sum after.
pub fn total_loss(sup: f64, lw: f64, lb: f64, cfg: &RegConfig, epoch: usize) -> f64 {
    if cfg.active(epoch) {
        sup + cfg.lambda1 * lw + cfg.lambda2 * lb
    } else {
        sup
    }
}

/// Effective-number class weights `(1−β)/(1−β^{n_k})`, mean-normalized,
/// switched on at `drw_epoch`.
pub fn drw_weights(
    class_counts: &[usize],
    beta: f64,
    epoch: usize,
    drw_epoch: usize,
) -> Result<ClassWeights> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidInput(format!(
            "beta must be in [0, 1), got {beta}"
        )));
    }
    if epoch < drw_epoch {
        return Ok(ClassWeights::uniform(class_counts.len()));
    }
    let raw = class_counts
        .iter()
        .map(|&n| {
            if n == 0 {
                return f64::INFINITY;
            }
            (1.0 - beta) / (1.0 - beta.powf(n as f64))
        })
        .collect();
    ClassWeights::normalized(raw)
}
