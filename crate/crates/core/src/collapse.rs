//! Class statistics and the neural-collapse metric suite (NC1–NC4), plus
//! the simplex ETF test and a generator for exact ETF frames.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{argmax, LinearClassifier};
use crate::numerics::matrix::{dot, norm};
use crate::numerics::{pinv, DenseMatrix, DEFAULT_PINV_TOL};
use crate::objectives::NORM_FLOOR;

/// Relative tolerance used when [`nc_report`] runs the ETF test on trained
/// features. Exact constructions pass at 1e-8; trained nets land near 0.05.
pub const REPORT_ETF_TOL: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct ClassStatistics {
    /// Class means, one row per class (`K x P`).
    pub mu: DenseMatrix,
    /// Mean of the class means.
    pub mu_c: Vec<f64>,
    /// Mean over all samples.
    pub h_bar: Vec<f64>,
    /// `P x K`, column `k` is `μ_k − h̄`.
    pub m_dot: DenseMatrix,
    /// `P x K`, column `k` is `μ_k − μ_C`.
    pub m_bar: DenseMatrix,
    pub sigma_t: DenseMatrix,
    pub sigma_w: DenseMatrix,
    pub sigma_b: DenseMatrix,
    pub counts: Vec<usize>,
    /// `‖μ_k − μ_C‖` per class.
    pub norms: Vec<f64>,
}

impl ClassStatistics {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.h_bar.len()
    }

    pub fn num_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `diag(n_1, …, n_K)`.
    pub fn lambda_diag(&self) -> DenseMatrix {
        DenseMatrix::diag(&self.counts.iter().map(|&n| n as f64).collect::<Vec<_>>())
    }
}

pub fn compute_class_stats(
    h: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
) -> Result<ClassStatistics> {
    let (n, p) = h.shape();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} feature rows",
            labels.len()
        )));
    }
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        if y >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        counts[y] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!("class {k} has no samples")));
    }

    let mut mu = DenseMatrix::zeros(num_classes, p);
    for (i, &y) in labels.iter().enumerate() {
        for (m, v) in mu.row_mut(y).iter_mut().zip(h.row(i)) {
            *m += v;
        }
    }
    for (k, &c) in counts.iter().enumerate() {
        mu.row_mut(k).iter_mut().for_each(|m| *m /= c as f64);
    }
    let mu_c = mu.mean_rows().into_vec();
    let h_bar = h.mean_rows().into_vec();

    let m_dot = DenseMatrix::from_fn(p, num_classes, |r, k| mu[(k, r)] - h_bar[r]);
    let m_bar = DenseMatrix::from_fn(p, num_classes, |r, k| mu[(k, r)] - mu_c[r]);

    let centered = DenseMatrix::from_fn(n, p, |i, j| h[(i, j)] - h_bar[j]);
    let within = DenseMatrix::from_fn(n, p, |i, j| h[(i, j)] - mu[(labels[i], j)]);
    let sigma_t = centered.t_matmul(&centered)?;
    let sigma_w = within.t_matmul(&within)?;
    let weighted = DenseMatrix::from_fn(p, num_classes, |r, k| m_dot[(r, k)] * counts[k] as f64);
    let sigma_b = weighted.matmul_t(&m_dot)?;

    let norms = (0..num_classes).map(|k| norm(&m_bar.col(k))).collect();
    Ok(ClassStatistics {
        mu,
        mu_c,
        h_bar,
        m_dot,
        m_bar,
        sigma_t,
        sigma_w,
        sigma_b,
        counts,
        norms,
    })
}

/// `tr(Σ_W Σ_B†) / K`.
pub fn nc1_metric(stats: &ClassStatistics) -> Result<f64> {
    let tr_b = stats.sigma_b.trace();
    if tr_b.is_nan() || tr_b <= 1e-14 * stats.sigma_t.trace() || tr_b <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "between-class scatter is zero".into(),
        ));
    }
    let pb = pinv(&stats.sigma_b, DEFAULT_PINV_TOL)?;
    Ok(stats.sigma_w.matmul(&pb)?.trace() / stats.num_classes() as f64)
}

/// Mean squared distance of a sample to its class mean.
pub fn nc1_raw(stats: &ClassStatistics) -> f64 {
    stats.sigma_w.trace() / stats.num_samples() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nc2Metrics {
    /// Pairwise angles between centered class means, in degrees.
    pub angle_matrix: DenseMatrix,
    /// Largest deviation of a pairwise cosine from `−1/(K−1)`.
    pub cos_dev: f64,
    /// Coefficient of variation of the centered-mean norms.
    pub norm_cv: f64,
}

fn column_cosines(m: &DenseMatrix, norms: &[f64]) -> DenseMatrix {
    let k = m.cols();
    let cols: Vec<Vec<f64>> = (0..k).map(|c| m.col(c)).collect();
    DenseMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            (dot(&cols[i], &cols[j]) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    })
}

pub fn nc2_metrics(stats: &ClassStatistics) -> Result<Nc2Metrics> {
    let k = stats.num_classes();
    if k < 2 {
        return Err(Error::DegenerateGeometry(
            "need at least two classes".into(),
        ));
    }
    if let Some(c) = stats.norms.iter().position(|&v| v < NORM_FLOOR) {
        return Err(Error::DegenerateGeometry(format!(
            "centered mean of class {c} has zero norm"
        )));
    }
    let cos = column_cosines(&stats.m_bar, &stats.norms);
    let target = -1.0 / (k as f64 - 1.0);
    let mut cos_dev = 0.0f64;
    let angle_matrix = DenseMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            cos_dev = cos_dev.max((cos[(i, j)] - target).abs());
            cos[(i, j)].acos().to_degrees()
        }
    });
    let mean = stats.norms.iter().sum::<f64>() / k as f64;
    let var = stats.norms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(Nc2Metrics {
        angle_matrix,
        cos_dev,
        norm_cv: var.sqrt() / mean,
    })
}

/// Mean over classes of `cos(w_k, μ_k − μ_C)`.
pub fn nc3_metric(stats: &ClassStatistics, classifier: &LinearClassifier) -> Result<f64> {
    let k = stats.num_classes();
    if classifier.num_classes() != k || classifier.feature_dim() != stats.dim() {
        return Err(Error::Shape(format!(
            "classifier is {}x{}, statistics are {}x{}",
            classifier.feature_dim(),
            classifier.num_classes(),
            stats.dim(),
            k
        )));
    }
    let mut total = 0.0;
    for c in 0..k {
        let w = classifier.class_weight(c);
        let nw = norm(&w);
        if nw < NORM_FLOOR {
            return Err(Error::DegenerateGeometry(format!(
                "classifier column {c} has zero norm"
            )));
        }
        if stats.norms[c] < NORM_FLOOR {
            return Err(Error::DegenerateGeometry(format!(
                "centered mean of class {c} has zero norm"
            )));
        }
        total += dot(&w, &stats.m_bar.col(c)) / (nw * stats.norms[c]);
    }
    Ok(total / k as f64)
}

/// Nearest class mean, ties to the smallest class index.
pub fn ncc_predict(h: &DenseMatrix, stats: &ClassStatistics) -> Vec<usize> {
    (0..h.rows())
        .map(|i| {
            let neg: Vec<f64> = (0..stats.num_classes())
                .map(|k| {
                    -h.row(i)
                        .iter()
                        .zip(stats.mu.row(k))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .collect();
            argmax(&neg)
        })
        .collect()
}

/// Fraction of rows where the linear classifier and the nearest-class-mean
/// rule agree.
pub fn nc4_agreement(
    h: &DenseMatrix,
    stats: &ClassStatistics,
    classifier: &LinearClassifier,
) -> Result<f64> {
    if h.rows() == 0 {
        return Err(Error::InvalidInput("no feature rows".into()));
    }
    let lin = classifier.predict(h)?;
    let ncc = ncc_predict(h, stats);
    let same = lin.iter().zip(&ncc).filter(|(a, b)| a == b).count();
    Ok(same as f64 / h.rows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtfCheck {
    pub verdict: bool,
    pub alpha: f64,
    pub residual: f64,
}

/// `K/(K−1)·I − 11ᵀ/(K−1)`.
pub fn etf_template(k: usize) -> DenseMatrix {
    let kf = k as f64;
    DenseMatrix::from_fn(k, k, |i, j| {
        let d = if i == j { kf } else { 0.0 };
        (d - 1.0) / (kf - 1.0)
    })
}

/// Fits `MᵀM ≈ α·T` by least squares over the columns of `m` (`P x K`).
pub fn is_simplex_etf(m: &DenseMatrix, tol: f64) -> Result<EtfCheck> {
    let (p, k) = m.shape();
    if k < 2 {
        return Err(Error::Spec(format!(
            "an ETF needs at least 2 vectors, got {k}"
        )));
    }
    if p + 1 < k {
        return Err(Error::Spec(format!(
            "{k} ETF vectors need dimension >= {}, got {p}",
            k - 1
        )));
    }
    let gram = m.t_matmul(m)?;
    let t = etf_template(k);
    let tt: f64 = t.data().iter().map(|v| v * v).sum();
    let alpha = gram
        .data()
        .iter()
        .zip(t.data())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / tt;
    let residual = gram.sub(&t.scale(alpha))?.frobenius_norm();
    Ok(EtfCheck {
        verdict: residual <= tol * alpha.abs() * k as f64,
        alpha,
        residual,
    })
}

fn random_orthonormal(p: usize, r: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    // Gram-Schmidt on Gaussian columns, stored as rows.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    while basis.len() < r {
        let mut v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nv = norm(&v);
        if nv > 1e-6 {
            basis.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    DenseMatrix::from_fn(p, r, |i, j| basis[j][i])
}

/// A `P x K` simplex ETF with `MᵀM = α·T`, embedded by a random isometry.
pub fn simplex_etf_frame(k: usize, p: usize, alpha: f64, seed: u64) -> Result<DenseMatrix> {
    if k < 2 || p + 1 < k {
        return Err(Error::Spec(format!("no {k}-vector ETF in dimension {p}")));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "ETF scale must be > 0, got {alpha}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Orthonormal basis of the complement of 1 in R^K, then a random
    // isometry from that (K−1)-dimensional space into R^P.
    let ones = vec![1.0 / (k as f64).sqrt(); k];
    let mut comp: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
    for e in 0..k {
        let mut v: Vec<f64> = (0..k).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
        for b in std::iter::once(&ones).chain(comp.iter()) {
            let d = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let nv = norm(&v);
        if nv > 1e-8 && comp.len() < k - 1 {
            comp.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    let q = random_orthonormal(p, k - 1, &mut rng);
    let scale = (alpha * k as f64 / (k as f64 - 1.0)).sqrt();
    // column j of the frame: scale · Q · Bᵀ (e_j − 1/K)
    let coords = DenseMatrix::from_fn(k - 1, k, |r, j| {
        let mean: f64 = comp[r].iter().sum::<f64>() / k as f64;
        comp[r][j] - mean
    });
    Ok(q.matmul(&coords)?.scale(scale))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcReport {
    pub nc1: f64,
    pub nc1_raw: f64,
    pub nc2_cos_dev: f64,
    pub nc2_norm_cv: f64,
    pub nc3_align: f64,
    pub nc4_agree: f64,
    /// `K x K`, degrees; empty when the centered means are degenerate.
    pub angle_matrix: DenseMatrix,
    pub norms: Vec<f64>,
    pub etf: Option<EtfCheck>,
}

/// Flat key-value view of an [`NcReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NcRecord {
    pub nc1: f64,
    pub nc2_cos_dev: f64,
    pub nc2_norm_cv: f64,
    pub nc3_align: f64,
    pub nc4_agree: f64,
    pub etf_ok: bool,
    pub etf_alpha: f64,
}

impl NcReport {
    pub fn record(&self) -> NcRecord {
        NcRecord {
            nc1: self.nc1,
            nc2_cos_dev: self.nc2_cos_dev,
            nc2_norm_cv: self.nc2_norm_cv,
            nc3_align: self.nc3_align,
            nc4_agree: self.nc4_agree,
            etf_ok: self.etf.is_some_and(|e| e.verdict),
            etf_alpha: self.etf.map_or(f64::NAN, |e| e.alpha),
        }
    }
}

fn or_nan(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::DegenerateGeometry(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// All metrics on one feature snapshot. Degenerate geometry shows up as NaN
/// rather than an error so that early-training epochs can still be logged.
pub fn nc_report(
    h: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
    classifier: &LinearClassifier,
) -> Result<NcReport> {
    let stats = compute_class_stats(h, labels, num_classes)?;
    let (angle_matrix, nc2_cos_dev, nc2_norm_cv) = match nc2_metrics(&stats) {
        Ok(m) => (m.angle_matrix, m.cos_dev, m.norm_cv),
        Err(Error::DegenerateGeometry(_)) => (DenseMatrix::zeros(0, 0), f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    let etf = if stats.dim() + 1 >= num_classes && num_classes >= 2 {
        Some(is_simplex_etf(&stats.m_bar, REPORT_ETF_TOL)?)
    } else {
        None
    };
    Ok(NcReport {
        nc1: or_nan(nc1_metric(&stats))?,
        nc1_raw: nc1_raw(&stats),
        nc2_cos_dev,
        nc2_norm_cv,
        nc3_align: or_nan(nc3_metric(&stats, classifier))?,
        nc4_agree: nc4_agreement(h, &stats, classifier)?,
        angle_matrix,
        norms: stats.norms.clone(),
        etf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
        DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
    }

    fn blob(k: usize, per: usize, p: usize, noise: f64, seed: u64) -> (DenseMatrix, Vec<usize>) {
        let means = random(k, p, seed).scale(5.0);
        let eps = random(k * per, p, seed + 1);
        let labels: Vec<usize> = (0..k * per).map(|i| i % k).collect();
        let h = DenseMatrix::from_fn(k * per, p, |i, j| {
            means[(labels[i], j)] + noise * eps[(i, j)]
        });
        (h, labels)
    }

    #[test]
    fn symmetric_two_point_case() {
        let h = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        let s = compute_class_stats(&h, &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(s.mu_c, vec![0.0, 0.0]);
        assert_eq!(s.h_bar, vec![0.0, 0.0]);
        assert_eq!(s.sigma_w, DenseMatrix::zeros(2, 2));
        assert_eq!(s.lambda_diag(), DenseMatrix::diag(&[2.0, 2.0]));
    }

    #[test]
    fn singleton_classes_have_no_within_scatter() {
        let h = random(3, 4, 1);
        let s = compute_class_stats(&h, &[2, 0, 1], 3).unwrap();
        assert!(s.sigma_w.frobenius_norm() < 1e-15);
        assert!(matches!(
            compute_class_stats(&h, &[0, 0, 1], 3),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn scatter_decomposition() {
        let h = random(60, 8, 2);
        let labels: Vec<usize> = (0..60).map(|i| (i * 7 + i / 5) % 3).collect();
        let s = compute_class_stats(&h, &labels, 3).unwrap();
        let sum = s.sigma_w.add(&s.sigma_b).unwrap();
        assert!(sum.rel_diff(&s.sigma_t).unwrap() <= 1e-10);
        for m in [&s.sigma_t, &s.sigma_w, &s.sigma_b] {
            assert!(m.rel_diff(&m.transpose()).unwrap() < 1e-14);
            let ev = to_na(m).symmetric_eigenvalues();
            assert!(ev.iter().all(|&e| e > -1e-10));
        }
    }

    #[test]
    fn nc1_fixed_point_scaling_and_oracle() {
        let (h, labels) = blob(4, 10, 6, 0.0, 3);
        let s = compute_class_stats(&h, &labels, 4).unwrap();
        assert!(nc1_metric(&s).unwrap().abs() < 1e-20);

        let (h, labels) = blob(4, 30, 6, 1.0, 3);
        let s = compute_class_stats(&h, &labels, 4).unwrap();
        let base = nc1_metric(&s).unwrap();
        assert!(base > 0.0 && base.is_finite());
        // shrink within-class deviations by c
        let c = 0.3;
        let shrunk = DenseMatrix::from_fn(h.rows(), h.cols(), |i, j| {
            s.mu[(labels[i], j)] + c * (h[(i, j)] - s.mu[(labels[i], j)])
        });
        let s2 = compute_class_stats(&shrunk, &labels, 4).unwrap();
        assert!((nc1_metric(&s2).unwrap() - c * c * base).abs() <= 1e-9 * base);

        let oracle =
            (to_na(&s.sigma_w) * to_na(&s.sigma_b).pseudo_inverse(1e-10).unwrap()).trace() / 4.0;
        assert!((base - oracle).abs() <= 1e-8 * oracle);

        let same = DenseMatrix::filled(6, 3, 1.0);
        let s3 = compute_class_stats(&same, &[0, 1, 2, 0, 1, 2], 3).unwrap();
        assert!(matches!(nc1_metric(&s3), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn nc2_on_planar_etf() {
        let m = simplex_etf_frame(3, 2, 1.0, 0).unwrap();
        let h = m.transpose();
        let s = compute_class_stats(&h, &[0, 1, 2], 3).unwrap();
        let r = nc2_metrics(&s).unwrap();
        assert!(r.cos_dev < 1e-12 && r.norm_cv < 1e-12);
        for i in 0..3 {
            assert_eq!(r.angle_matrix[(i, i)], 0.0);
            for j in (0..3).filter(|&j| j != i) {
                assert!((r.angle_matrix[(i, j)] - 120.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nc2_k10_angle() {
        let h = simplex_etf_frame(10, 16, 2.0, 4).unwrap().transpose();
        let s = compute_class_stats(&h, &(0..10).collect::<Vec<_>>(), 10).unwrap();
        let r = nc2_metrics(&s).unwrap();
        let expect = (-1.0f64 / 9.0).acos().to_degrees();
        assert!((expect - 96.379).abs() < 1e-3);
        for i in 0..10 {
            for j in (0..10).filter(|&j| j != i) {
                assert!((r.angle_matrix[(i, j)] - expect).abs() < 1e-9);
                assert_eq!(r.angle_matrix[(i, j)], r.angle_matrix[(j, i)]);
            }
        }
    }

    #[test]
    fn nc2_orthonormal_frame() {
        // centered means e_k, so μ_C = 0 when the features are e_k − 1/4
        let h = DenseMatrix::from_fn(4, 5, |i, j| if i == j { 1.0 } else { 0.0 });
        let mut s = compute_class_stats(&h, &[0, 1, 2, 3], 4).unwrap();
        s.m_bar = DenseMatrix::from_fn(5, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        s.norms = vec![1.0; 4];
        let r = nc2_metrics(&s).unwrap();
        assert!((r.cos_dev - 1.0 / 3.0).abs() < 1e-15);

        let flat = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let s = compute_class_stats(&flat, &[0, 1], 2).unwrap();
        assert!(matches!(nc2_metrics(&s), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn nc2_invariant_to_rotation_and_scale() {
        let (h, labels) = blob(5, 8, 4, 0.5, 7);
        let base = nc2_metrics(&compute_class_stats(&h, &labels, 5).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthonormal(4, 4, &mut rng);
        let moved = h.matmul(&q).unwrap().scale(2.5);
        let r = nc2_metrics(&compute_class_stats(&moved, &labels, 5).unwrap()).unwrap();
        assert!((r.cos_dev - base.cos_dev).abs() < 1e-10);
        assert!((r.norm_cv - base.norm_cv).abs() < 1e-10);
        assert!(r.angle_matrix.rel_diff(&base.angle_matrix).unwrap() < 1e-9);
    }

    #[test]
    fn nc3_cases() {
        let (h, labels) = blob(10, 3, 64, 0.2, 8);
        let s = compute_class_stats(&h, &labels, 10).unwrap();
        let par = LinearClassifier::new(s.m_bar.scale(7.0), vec![0.0; 10]).unwrap();
        assert!((nc3_metric(&s, &par).unwrap() - 1.0).abs() < 1e-12);
        let anti = LinearClassifier::new(s.m_bar.scale(-1.0), vec![0.0; 10]).unwrap();
        assert!((nc3_metric(&s, &anti).unwrap() + 1.0).abs() < 1e-12);

        let w = random(64, 10, 9);
        let rand_clf = LinearClassifier::new(w.clone(), vec![0.0; 10]).unwrap();
        let v = nc3_metric(&s, &rand_clf).unwrap();
        let mut oracle = 0.0;
        for k in 0..10 {
            let a = to_na(&w).column(k).into_owned();
            let b = to_na(&s.m_bar).column(k).into_owned();
            oracle += a.dot(&b) / (a.norm() * b.norm()) / 10.0;
        }
        assert!((v - oracle).abs() <= 1e-12);
        assert!(v.abs() < 0.5);

        let mut zero = w;
        zero.data_mut()[..]
            .iter_mut()
            .step_by(10)
            .for_each(|x| *x = 0.0);
        let z = LinearClassifier::new(zero, vec![0.0; 10]).unwrap();
        assert!(matches!(
            nc3_metric(&s, &z),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    fn ncc_classifier(s: &ClassStatistics) -> LinearClassifier {
        let w = s.mu.transpose();
        let b = (0..s.num_classes())
            .map(|k| -0.5 * norm(s.mu.row(k)).powi(2))
            .collect();
        LinearClassifier::new(w, b).unwrap()
    }

    #[test]
    fn nc4_cases() {
        let (h, labels) = blob(6, 20, 5, 3.0, 10);
        let s = compute_class_stats(&h, &labels, 6).unwrap();
        let clf = ncc_classifier(&s);
        assert_eq!(nc4_agreement(&h, &s, &clf).unwrap(), 1.0);

        // permuted columns: brute-force scan
        let perm = [3, 0, 5, 1, 2, 4];
        let pw = DenseMatrix::from_fn(5, 6, |r, c| clf.weight[(r, perm[c])]);
        let pb: Vec<f64> = (0..6).map(|c| clf.bias[(0, perm[c])]).collect();
        let pclf = LinearClassifier::new(pw, pb).unwrap();
        let mut same = 0;
        for i in 0..h.rows() {
            let mut best_lin = (0, f64::NEG_INFINITY);
            let mut best_ncc = (0, f64::INFINITY);
            for k in 0..6 {
                let z: f64 = (0..5).map(|r| h[(i, r)] * pclf.weight[(r, k)]).sum::<f64>()
                    + pclf.bias[(0, k)];
                if z > best_lin.1 {
                    best_lin = (k, z);
                }
                let d: f64 = (0..5).map(|r| (h[(i, r)] - s.mu[(k, r)]).powi(2)).sum();
                if d < best_ncc.1 {
                    best_ncc = (k, d);
                }
            }
            same += usize::from(best_lin.0 == best_ncc.0);
        }
        let got = nc4_agreement(&h, &s, &pclf).unwrap();
        assert_eq!(got, same as f64 / h.rows() as f64);

        let one = h.select_rows(&[0]);
        let a = nc4_agreement(&one, &s, &pclf).unwrap();
        assert!(a == 0.0 || a == 1.0);
    }

    #[test]
    fn etf_checks() {
        let m = simplex_etf_frame(3, 3, 1.0, 1).unwrap();
        let g = m.t_matmul(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { -0.5 };
                assert!((g[(i, j)] - expect).abs() < 1e-12);
            }
        }
        let r = is_simplex_etf(&m, 1e-8).unwrap();
        assert!(r.verdict && (r.alpha - 1.0).abs() < 1e-12);
        let r3 = is_simplex_etf(&m.scale(3.0), 1e-8).unwrap();
        assert!(r3.verdict && (r3.alpha - 9.0 * r.alpha).abs() < 1e-10);

        let ortho = DenseMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(!is_simplex_etf(&ortho, 1e-3).unwrap().verdict);
        assert!(matches!(
            is_simplex_etf(&DenseMatrix::zeros(2, 4), 0.1),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn etf_verdict_invariances() {
        let m = simplex_etf_frame(6, 8, 2.0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_orthonormal(8, 8, &mut rng);
        let rotated = q.matmul(&m).unwrap();
        let perm = DenseMatrix::from_fn(8, 6, |r, c| m[(r, (c + 2) % 6)]);
        for v in [&rotated, &perm] {
            let r = is_simplex_etf(v, 1e-8).unwrap();
            assert!(r.verdict && (r.alpha - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_collapse_report() {
        let k = 5;
        let frame = simplex_etf_frame(k, 8, 4.0, 2).unwrap();
        let labels: Vec<usize> = (0..40).map(|i| i % k).collect();
        let h = DenseMatrix::from_fn(40, 8, |i, j| frame[(j, labels[i])] + 1.5);
        let s = compute_class_stats(&h, &labels, k).unwrap();
        let clf = ncc_classifier(&s);
        let r = nc_report(&h, &labels, k, &clf).unwrap();
        assert!(r.nc1.abs() < 1e-20);
        assert!(r.nc2_cos_dev <= 1e-10);
        assert_eq!(r.nc4_agree, 1.0);
        let rec = r.record();
        assert!(rec.etf_ok && (rec.etf_alpha - 4.0).abs() < 1e-9);
        let json = serde_json::to_value(rec).unwrap();
        for key in [
            "nc1",
            "nc2_cos_dev",
            "nc2_norm_cv",
            "nc3_align",
            "nc4_agree",
            "etf_ok",
            "etf_alpha",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn degenerate_report_uses_nan() {
        let h = DenseMatrix::filled(4, 3, 2.0);
        let clf = LinearClassifier::new(DenseMatrix::filled(3, 2, 1.0), vec![0.0, 0.0]).unwrap();
        let r = nc_report(&h, &[0, 1, 0, 1], 2, &clf).unwrap();
        assert!(r.nc1.is_nan() && r.nc2_cos_dev.is_nan() && r.nc3_align.is_nan());
        assert_eq!(r.nc4_agree, 1.0);
    }
}
