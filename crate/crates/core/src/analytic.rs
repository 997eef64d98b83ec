//! Closed-form results and executable checks: the least-squares optimal
//! linear head, the max-min cosine bound for unit vectors, and
//! self-duality of the retrained head on collapsed features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::collapse::{compute_class_stats, simplex_etf_frame};
use crate::error::{Error, Result};
use crate::model::LinearClassifier;
use crate::numerics::matrix::{dot, norm};
use crate::numerics::{pinv, DenseMatrix, DiffGraph, DEFAULT_PINV_TOL};
use crate::objectives::{between_class_node, mse_loss};

#[derive(Debug, Clone)]
pub struct LsSolution {
    /// `P x K`.
    pub w: DenseMatrix,
    pub b: Vec<f64>,
    /// MSE loss at `(w, b)`.
    pub residual: f64,
}

impl LsSolution {
    pub fn classifier(&self) -> Result<LinearClassifier> {
        LinearClassifier::new(self.w.clone(), self.b.clone())
    }
}

/// `(1/2n)·‖H·W + 1·bᵀ − Y‖²` for one-hot `Y`.
pub fn mse_at(h: &DenseMatrix, labels: &[usize], w: &DenseMatrix, b: &[f64]) -> Result<f64> {
    let clf = LinearClassifier::new(w.clone(), b.to_vec())?;
    mse_loss(&clf.forward_logits(h)?, labels)
}

/// Minimizer of the MSE loss over `(W, b)` with `H` fixed:
/// `W = Σ_T† Ṁ Λ`, `b = (1/n)·1ᵀY − h̄ᵀW`.
pub fn ls_optimal_classifier(
    h: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
) -> Result<LsSolution> {
    if h.rows() < num_classes {
        return Err(Error::InvalidInput(format!(
            "need at least {num_classes} samples, got {}",
            h.rows()
        )));
    }
    let stats = compute_class_stats(h, labels, num_classes)?;
    let w = pinv(&stats.sigma_t, DEFAULT_PINV_TOL)?
        .matmul(&stats.m_dot)?
        .matmul(&stats.lambda_diag())?;
    let n = h.rows() as f64;
    let hbar = DenseMatrix::from_vec(1, stats.dim(), stats.h_bar.clone())?;
    let shift = hbar.matmul(&w)?;
    let b: Vec<f64> = (0..num_classes)
        .map(|k| stats.counts[k] as f64 / n - shift[(0, k)])
        .collect();
    let residual = mse_at(h, labels, &w, &b)?;
    Ok(LsSolution { w, b, residual })
}

/// Smallest loss increase over `trials` random perturbations of size
/// `scale` (Frobenius norm of each perturbation of `[W; b]`).
pub fn perturbation_probe(
    h: &DenseMatrix,
    labels: &[usize],
    sol: &LsSolution,
    trials: usize,
    scale: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, k) = sol.w.shape();
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let dir: Vec<f64> = (0..(p + 1) * k)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let s = scale / norm(&dir);
        let w = DenseMatrix::from_fn(p, k, |r, c| sol.w[(r, c)] + s * dir[r * k + c]);
        let b: Vec<f64> = (0..k).map(|c| sol.b[c] + s * dir[p * k + c]).collect();
        worst = worst.min(mse_at(h, labels, &w, &b)? - sol.residual);
    }
    Ok(worst)
}

/// Relative norm of the normal-equation residual `Aᵀ(A·X − Y)` for the
/// augmented design `A = [H | 1]`.
pub fn normal_equation_residual(
    h: &DenseMatrix,
    labels: &[usize],
    sol: &LsSolution,
) -> Result<f64> {
    let (n, p) = h.shape();
    let k = sol.w.cols();
    let a = DenseMatrix::from_fn(n, p + 1, |i, j| if j < p { h[(i, j)] } else { 1.0 });
    let x = DenseMatrix::from_fn(
        p + 1,
        k,
        |r, c| if r < p { sol.w[(r, c)] } else { sol.b[c] },
    );
    let y = DenseMatrix::from_fn(n, k, |i, c| if labels[i] == c { 1.0 } else { 0.0 });
    let grad = a.t_matmul(&a.matmul(&x)?.sub(&y)?)?;
    Ok(grad.frobenius_norm() / a.t_matmul(&y)?.frobenius_norm().max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxMinResult {
    /// Largest pairwise cosine after optimization.
    pub max_cosine: f64,
    /// `−1/(K−1)`.
    pub bound: f64,
    /// Within 0.05 of the bound.
    pub converged: bool,
}

fn max_pairwise_cosine(x: &DenseMatrix) -> f64 {
    let k = x.rows();
    let mut best = f64::NEG_INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            best = best.max(dot(x.row(i), x.row(j)) / (norm(x.row(i)) * norm(x.row(j))));
        }
    }
    best
}

fn normalize_rows(x: &mut DenseMatrix) {
    for r in 0..x.rows() {
        let n = norm(x.row(r));
        if n > 0.0 {
            x.row_mut(r).iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Gradient descent on the between-class angle loss over `K` free unit
/// vectors in `R^P`, re-normalizing after every step.
pub fn verify_maxmin_cosine(k: usize, p: usize, steps: usize, seed: u64) -> Result<MaxMinResult> {
    if k < 2 || p + 1 < k {
        return Err(Error::Spec(format!(
            "{k} vectors cannot reach the bound in dimension {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DenseMatrix::from_fn(k, p, |_, _| StandardNormal.sample(&mut rng));
    normalize_rows(&mut x);
    let lr0 = 0.5;
    for t in 0..steps {
        let mut g = DiffGraph::new();
        let xn = g.param(x.clone());
        let loss = between_class_node(&mut g, xn)?;
        let grad = g.backward(loss)?.take(xn);
        let lr = lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / steps as f64).cos());
        x.axpy(-lr, &grad)?;
        normalize_rows(&mut x);
    }
    let bound = -1.0 / (k as f64 - 1.0);
    let max_cosine = max_pairwise_cosine(&x);
    Ok(MaxMinResult {
        max_cosine,
        bound,
        converged: max_cosine <= bound + 0.05,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfDualityReport {
    /// `min_k cos(w_k, μ_k − h̄)` under class-balanced resampling.
    pub min_alignment: f64,
    /// `(max − min)/mean` of the classifier column norms.
    pub norm_spread: f64,
    /// Same alignment when the resampled counts follow an r = 100 long tail.
    pub imbalanced_min_alignment: f64,
    /// Imbalanced alignment measured against `μ_k − μ_C` instead of
    /// `μ_k − h̄`. The least-squares head on collapsed features does not
    /// depend on the counts, so this stays at the balanced value.
    pub imbalanced_min_alignment_mu_c: f64,
}

/// Per-class alignment of a least-squares head fitted on collapsed features.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedFit {
    /// `cos(w_k, μ_k − h̄)` with `h̄` the mean of the resampled features.
    pub align_global: Vec<f64>,
    /// `cos(w_k, μ_k − μ_C)`.
    pub align_center: Vec<f64>,
    /// `‖w_k‖`.
    pub norms: Vec<f64>,
}

/// Least-squares head on features where every sample sits at its class
/// mean, with `counts[k]` copies of `μ_k` (`means` is `P x K`).
pub fn fit_on_collapsed(means: &DenseMatrix, counts: &[usize]) -> Result<CollapsedFit> {
    let (p, k) = means.shape();
    if counts.len() != k {
        return Err(Error::Shape(format!(
            "{} counts for {k} classes",
            counts.len()
        )));
    }
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    let h = DenseMatrix::from_fn(labels.len(), p, |i, j| means[(j, labels[i])]);
    let sol = ls_optimal_classifier(&h, &labels, k)?;
    let stats = compute_class_stats(&h, &labels, k)?;
    let cos = |a: &[f64], b: &[f64]| dot(a, b) / (norm(a) * norm(b));
    let mut fit = CollapsedFit {
        align_global: Vec::with_capacity(k),
        align_center: Vec::with_capacity(k),
        norms: Vec::with_capacity(k),
    };
    for c in 0..k {
        let w = sol.w.col(c);
        fit.align_global.push(cos(&w, &stats.m_dot.col(c)));
        fit.align_center.push(cos(&w, &stats.m_bar.col(c)));
        fit.norms.push(norm(&w));
    }
    Ok(fit)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Builds an `α`-scaled simplex ETF of class means (shifted off the origin),
/// places every sample at its mean, resamples with equal class counts and
/// fits the least-squares head. The contrast run uses long-tailed counts on
/// the same means.
pub fn verify_self_duality(k: usize, p: usize, alpha: f64, seed: u64) -> Result<SelfDualityReport> {
    let frame = simplex_etf_frame(k, p, alpha, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let offset: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let means = DenseMatrix::from_fn(p, k, |r, c| frame[(r, c)] + offset[r]);

    let per_class = 100;
    let bal = fit_on_collapsed(&means, &vec![per_class; k])?;
    let mean_norm = bal.norms.iter().sum::<f64>() / k as f64;
    let max_norm = bal.norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (max_norm - min_of(&bal.norms)) / mean_norm;

    let tail = crate::data::LongTailSpec::new(100.0, k).class_sizes(per_class)?;
    let imb = fit_on_collapsed(&means, &tail)?;
    Ok(SelfDualityReport {
        min_alignment: min_of(&bal.align_global),
        norm_spread: spread,
        imbalanced_min_alignment: min_of(&imb.align_global),
        imbalanced_min_alignment_mu_c: min_of(&imb.align_center),
    })
}

/// One line of `verify` output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRecord {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Runs the three verifiers at `(k, p)` and returns one record each.
pub fn run_verifiers(k: usize, p: usize, seed: u64) -> Result<Vec<VerifyRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8 * k.max(2) + p;
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let h = DenseMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let sol = ls_optimal_classifier(&h, &labels, k)?;
    let ne = normal_equation_residual(&h, &labels, &sol)?;
    let probe = perturbation_probe(&h, &labels, &sol, 100, 1e-3, seed)?;
    let prop1 = VerifyRecord {
        name: "prop1",
        pass: ne <= 1e-6 && probe > 0.0,
        detail: format!("normal_eq_residual={ne:.3e} min_increase={probe:.3e}"),
    };

    let mm = verify_maxmin_cosine(k, p, 3000, seed)?;
    let prop3 = VerifyRecord {
        name: "prop3",
        pass: (mm.max_cosine - mm.bound).abs() <= 1e-2,
        detail: format!("max_cos={:.6} bound={:.6}", mm.max_cosine, mm.bound),
    };

    let sd = verify_self_duality(k, p, 5.0, seed)?;
    let prop4 = VerifyRecord {
        name: "prop4",
        pass: sd.min_alignment >= 0.999 && sd.imbalanced_min_alignment < sd.min_alignment,
        detail: format!(
            "min_align={:.9} norm_spread={:.3e} imbalanced_min_align={:.6}",
            sd.min_alignment, sd.norm_spread, sd.imbalanced_min_alignment
        ),
    };
    Ok(vec![prop1, prop3, prop4])
}
