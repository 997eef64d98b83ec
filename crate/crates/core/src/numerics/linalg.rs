//! Singular value decomposition and the Moore-Penrose pseudoinverse.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration. It is slow for large
//! matrices but accurate to a few ulps at the sizes used here (P ≤ a few
//! hundred), and it handles rank deficiency without special cases.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Default relative singular-value cutoff for [`pinv`].
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(s) Vᵀ` with `r = min(m, n)` columns in `u` and `v`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("svd of non-finite matrix".into()));
    }
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    svd_tall(a)
}

// Works on columns, so operate on the transpose (columns become rows) to keep
// memory access contiguous.
fn svd_tall(a: &DenseMatrix) -> Result<Svd> {
    let n = a.cols();
    let mut ut = a.transpose(); // n x m, row j = column j of U·Σ
    let mut vt = DenseMatrix::identity(n); // row j = column j of V

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let up = ut.row(p);
                    let uq = ut.row(q);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in up.iter().zip(uq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut ut, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let m = a.rows();
    let mut singular_values = Vec::with_capacity(n);
    for j in 0..n {
        let row = ut.row_mut(j);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
        singular_values.push(norm);
    }

    // Sort by descending singular value.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| singular_values[j].total_cmp(&singular_values[i]));
    let u = DenseMatrix::from_fn(m, n, |r, c| ut[(order[c], r)]);
    let v = DenseMatrix::from_fn(n, n, |r, c| vt[(order[c], r)]);
    let singular_values = order.iter().map(|&i| singular_values[i]).collect();
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

fn rotate_rows(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.data_mut();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Moore-Penrose pseudoinverse. Singular values below `tol · σ_max` are
/// treated as zero.
pub fn pinv(m: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "pinv tolerance must be > 0, got {tol}"
        )));
    }
    let Svd {
        u,
        singular_values,
        v,
    } = svd(m)?;
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = tol * smax;
    let (rows, cols) = (m.cols(), m.rows());
    let mut out = DenseMatrix::zeros(rows, cols);
    for (k, s) in singular_values.iter().enumerate() {
        if *s <= cutoff || *s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..rows {
            let vik = v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vik * u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Frobenius residuals of the four Penrose conditions for a candidate `x = m†`.
pub fn penrose_residuals(m: &DenseMatrix, x: &DenseMatrix) -> Result<[f64; 4]> {
    let mx = m.matmul(x)?;
    let xm = x.matmul(m)?;
    Ok([
        mx.matmul(m)?.sub(m)?.frobenius_norm(),
        xm.matmul(x)?.sub(x)?.frobenius_norm(),
        mx.sub(&mx.transpose())?.frobenius_norm(),
        xm.sub(&xm.transpose())?.frobenius_norm(),
    ])
}
