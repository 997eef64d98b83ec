//! Central finite-difference gradient checking.

use crate::error::{Error, Result};

/// Compares the analytic gradient returned by `f` against central
/// differences of its value, coordinate by coordinate.
///
/// Returns `max_i |analytic_i − numeric_i| / max(1, |numeric_i|)`.
pub fn grad_check<F>(f: F, x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidInput(format!("eps must be > 0, got {eps}")));
    }
    let (v0, analytic) = f(x)?;
    if !v0.is_finite() {
        return Err(Error::Numerical("function value is non-finite at x".into()));
    }
    if analytic.len() != x.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} coordinates",
            analytic.len(),
            x.len()
        )));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe)?.0;
        probe[i] = x[i] - eps;
        let minus = f(&probe)?.0;
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value probing coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exact() {
        let f = |x: &[f64]| {
            Ok((
                x.iter().map(|v| v * v).sum(),
                x.iter().map(|v| 2.0 * v).collect(),
            ))
        };
        assert!(grad_check(f, &[1.0, 2.0, 3.0], 1e-5).unwrap() <= 1e-6);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |x: &[f64]| Ok((x[0] * x[0], vec![x[0]]));
        assert!(grad_check(f, &[2.0], 1e-5).unwrap() > 0.5);
    }

    #[test]
    fn non_finite_probe_is_an_error() {
        let f = |x: &[f64]| Ok((if x[0] > 0.0 { f64::NAN } else { 0.0 }, vec![0.0]));
        assert!(matches!(
            grad_check(f, &[0.0], 1e-5),
            Err(Error::Numerical(_))
        ));
    }
}
