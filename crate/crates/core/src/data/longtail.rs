//! Exponential-decay long-tail subsampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Imbalance ratio plus the order in which classes become head → tail.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTailSpec {
    pub imbalance_ratio: f64,
    /// `ordering[j]` is the class placed at rank `j` (rank 0 is the head).
    pub ordering: Vec<usize>,
}

impl LongTailSpec {
    /// Identity ordering: class 0 is the head, class `K-1` the tail.
    pub fn new(imbalance_ratio: f64, num_classes: usize) -> Self {
        Self {
            imbalance_ratio,
            ordering: (0..num_classes).collect(),
        }
    }

    fn validate(&self, num_classes: usize) -> Result<()> {
        if !self.imbalance_ratio.is_finite() || self.imbalance_ratio < 1.0 {
            return Err(Error::Spec(format!(
                "imbalance ratio must be >= 1, got {}",
                self.imbalance_ratio
            )));
        }
        let mut seen = vec![false; num_classes];
        if self.ordering.len() != num_classes {
            return Err(Error::Spec(format!(
                "ordering has {} entries for {num_classes} classes",
                self.ordering.len()
            )));
        }
        for &c in &self.ordering {
            if c >= num_classes || std::mem::replace(&mut seen[c], true) {
                return Err(Error::Spec(
                    "ordering is not a permutation of the classes".into(),
                ));
            }
        }
        Ok(())
    }

    /// Kept size for each rank: `round(m · r^(−j/(K−1)))`, half rounded up.
    pub fn rank_sizes(&self, per_class: usize) -> Result<Vec<usize>> {
        let k = self.ordering.len();
        let m = per_class as f64;
        let sizes: Vec<usize> = (0..k)
            .map(|j| {
                let exponent = if k > 1 {
                    -(j as f64) / (k as f64 - 1.0)
                } else {
                    0.0
                };
                (m * self.imbalance_ratio.powf(exponent) + 0.5).floor() as usize
            })
            .collect();
        if let Some(j) = sizes.iter().position(|&s| s < 1) {
            return Err(Error::Spec(format!(
                "rank {j} would keep no samples (m={per_class}, r={})",
                self.imbalance_ratio
            )));
        }
        Ok(sizes)
    }

    /// Kept size per class index.
    pub fn class_sizes(&self, per_class: usize) -> Result<Vec<usize>> {
        let ranks = self.rank_sizes(per_class)?;
        let mut out = vec![0; self.ordering.len()];
        for (j, &class) in self.ordering.iter().enumerate() {
            out[class] = ranks[j];
        }
        Ok(out)
    }
}

/// Subsamples a balanced dataset so class sizes decay exponentially.
///
/// Kept rows are chosen uniformly without replacement and keep their
/// original relative order.
pub fn apply_long_tail(ds: &Dataset, spec: &LongTailSpec, seed: u64) -> Result<Dataset> {
    spec.validate(ds.num_classes())?;
    if !ds.is_balanced() {
        return Err(Error::Spec(
            "long-tail subsampling needs a balanced dataset".into(),
        ));
    }
    let per_class = ds.class_counts()[0];
    let sizes = spec.class_sizes(per_class)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(sizes.iter().sum());
    for (class, members) in ds.indices_by_class().iter().enumerate() {
        let mut chosen: Vec<usize> =
            rand::seq::index::sample(&mut rng, members.len(), sizes[class])
                .into_iter()
                .map(|i| members[i])
                .collect();
        chosen.sort_unstable();
        keep.extend(chosen);
    }
    keep.sort_unstable();
    ds.subset(&keep, format!("{}-lt{}", ds.name(), spec.imbalance_ratio))
}
