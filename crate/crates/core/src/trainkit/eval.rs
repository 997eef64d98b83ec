use rayon::prelude::*;
use serde::Serialize;

use super::train::TrainState;
use crate::data::{corrupt_gaussian, Dataset};
use crate::error::{Error, Result};

/// Noise levels of the default robustness sweep.
pub const DEFAULT_SIGMAS: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];

/// Shot buckets by training-set class size: many `> many_above`, few
/// `< few_below`, medium in between (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Buckets {
    pub many_above: usize,
    pub few_below: usize,
}

impl Default for Buckets {
    fn default() -> Self {
        Self {
            many_above: 100,
            few_below: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bucket {
    Many,
    Medium,
    Few,
}

impl Buckets {
    pub fn of(&self, train_count: usize) -> Bucket {
        if train_count > self.many_above {
            Bucket::Many
        } else if train_count < self.few_below {
            Bucket::Few
        } else {
            Bucket::Medium
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracy {
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    /// Evaluation samples per class.
    pub per_class_count: Vec<usize>,
    pub groups: GroupAccuracy,
}

pub fn evaluate(state: &TrainState, ds: &Dataset, buckets: &Buckets) -> Result<EvalReport> {
    let k = state.num_classes();
    if ds.num_classes() != k {
        return Err(Error::Shape(format!(
            "model has {k} classes, data has {}",
            ds.num_classes()
        )));
    }
    let preds = state.predict(ds.features())?;
    let mut correct = vec![0usize; k];
    for (p, &y) in preds.iter().zip(ds.labels()) {
        if *p == y {
            correct[y] += 1;
        }
    }
    let counts = ds.class_counts();
    let per_class = (0..k)
        .map(|c| correct[c] as f64 / counts[c] as f64)
        .collect();
    let group = |b: Bucket| {
        let members: Vec<usize> = (0..k)
            .filter(|&c| buckets.of(state.train_counts[c]) == b)
            .collect();
        let n: usize = members.iter().map(|&c| counts[c]).sum();
        (n > 0).then(|| members.iter().map(|&c| correct[c]).sum::<usize>() as f64 / n as f64)
    };
    Ok(EvalReport {
        accuracy: correct.iter().sum::<usize>() as f64 / ds.len() as f64,
        per_class,
        per_class_count: counts.to_vec(),
        groups: GroupAccuracy {
            many: group(Bucket::Many),
            medium: group(Bucket::Medium),
            few: group(Bucket::Few),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRow {
    pub sigma: f64,
    pub accuracy: f64,
}

/// Accuracy on Gaussian-corrupted copies of `ds`, one row per sigma.
pub fn noise_robustness(
    state: &TrainState,
    ds: &Dataset,
    sigmas: &[f64],
    seed: u64,
) -> Result<Vec<NoiseRow>> {
    if let Some(s) = sigmas.iter().find(|s| s.is_nan() || **s < 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise sigma must be >= 0, got {s}"
        )));
    }
    sigmas
        .par_iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let noisy = corrupt_gaussian(ds, sigma, seed.wrapping_add(i as u64))?;
            let r = evaluate(state, &noisy, &Buckets::default())?;
            Ok(NoiseRow {
                sigma,
                accuracy: r.accuracy,
            })
        })
        .collect()
}
