//! A long-tailed train split and a balanced test split drawn from one
//! Gaussian mixture.

use super::dataset::Dataset;
use super::longtail::{apply_long_tail, LongTailSpec};
use super::synth::GaussianMixture;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// Per-class size before tailing (the head class keeps all of it).
    pub head_per_class: usize,
    pub imbalance_ratio: f64,
    pub test_per_class: usize,
    pub separation: f64,
    pub spread: f64,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 32,
            head_per_class: 1000,
            imbalance_ratio: 100.0,
            test_per_class: 200,
            separation: 3.5,
            spread: 1.0,
            seed: 0,
        }
    }
}

/// Returns `(train, test)`.
pub fn build_task(spec: &TaskSpec) -> Result<(Dataset, Dataset)> {
    let mixture = GaussianMixture::new(spec.num_classes, spec.dim, spec.separation, spec.seed)?;
    let pool = mixture.sample(spec.head_per_class, spec.spread, spec.seed.wrapping_add(1))?;
    let tail = LongTailSpec::new(spec.imbalance_ratio, spec.num_classes);
    let train = apply_long_tail(&pool, &tail, spec.seed.wrapping_add(2))?;
    let test = mixture.sample(spec.test_per_class, spec.spread, spec.seed.wrapping_add(3))?;
    Ok((train, test))
}
