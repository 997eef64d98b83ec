//! Synthetic Gaussian mixtures and test-time corruption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// `K` isotropic Gaussian classes whose means lie on a sphere.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    means: DenseMatrix,
}

impl GaussianMixture {
    /// Means drawn uniformly on the radius-`separation` sphere in `R^dim`.
    pub fn new(num_classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(num_classes, dim, separation, &mut rng)
    }

    fn with_rng(
        num_classes: usize,
        dim: usize,
        separation: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_classes < 2 || dim < 2 {
            return Err(Error::InvalidInput(format!(
                "need K >= 2 and D >= 2, got K={num_classes}, D={dim}"
            )));
        }
        if separation.is_nan() || separation <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "separation must be > 0, got {separation}"
            )));
        }
        let mut means = DenseMatrix::zeros(num_classes, dim);
        for k in 0..num_classes {
            let row = means.row_mut(k);
            loop {
                row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let n = crate::numerics::matrix::norm(row);
                if n > 1e-12 {
                    row.iter_mut().for_each(|v| *v *= separation / n);
                    break;
                }
            }
        }
        Ok(Self { means })
    }

    pub fn means(&self) -> &DenseMatrix {
        &self.means
    }

    pub fn num_classes(&self) -> usize {
        self.means.rows()
    }

    /// `per_class` samples of each class, class-major order.
    pub fn sample(&self, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with_rng(per_class, spread, &mut rng)
    }

    fn sample_with_rng(
        &self,
        per_class: usize,
        spread: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Dataset> {
        if per_class < 1 {
            return Err(Error::InvalidInput("per_class must be >= 1".into()));
        }
        if spread < 0.0 || !spread.is_finite() {
            return Err(Error::InvalidInput(format!(
                "spread must be >= 0, got {spread}"
            )));
        }
        let (k, d) = self.means.shape();
        let mut features = DenseMatrix::zeros(k * per_class, d);
        let mut labels = Vec::with_capacity(k * per_class);
        for class in 0..k {
            let mean = self.means.row(class);
            for j in 0..per_class {
                let row = features.row_mut(class * per_class + j);
                for (v, m) in row.iter_mut().zip(mean) {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = m + spread * z;
                }
                labels.push(class);
            }
        }
        Dataset::new(features, labels, k, format!("gmm-k{k}-d{d}"))
    }
}

/// Means and samples drawn from one seeded stream.
pub fn gen_gaussian_mixture(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixture = GaussianMixture::with_rng(num_classes, dim, separation, &mut rng)?;
    mixture.sample_with_rng(per_class, spread, &mut rng)
}

/// Adds i.i.d. `N(0, sigma²)` noise to every feature; labels unchanged.
pub fn corrupt_gaussian(ds: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(ds.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = ds.features().clone();
    for v in features.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
    ds.with_features(features, format!("{}+noise{sigma}", ds.name()))
}
