//! Instance-balanced and class-balanced index streams.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Shuffled permutation of all examples.
    InstanceBalanced,
    /// Class drawn uniformly per slot, then an instance of that class.
    ClassBalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerMode {
    pub sampling: Sampling,
    pub seed: u64,
}

impl SamplerMode {
    pub fn instance_balanced(seed: u64) -> Self {
        Self {
            sampling: Sampling::InstanceBalanced,
            seed,
        }
    }

    pub fn class_balanced(seed: u64) -> Self {
        Self {
            sampling: Sampling::ClassBalanced,
            seed,
        }
    }
}

/// One epoch of mini-batches (`len(ds)` draws in total; the last batch may
/// be short).
pub fn make_index_stream(
    ds: &Dataset,
    mode: SamplerMode,
    batch_size: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 1 {
        return Err(Error::InvalidInput("batch_size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mode.seed);
    let order: Vec<usize> = match mode.sampling {
        Sampling::InstanceBalanced => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut rng);
            idx
        }
        Sampling::ClassBalanced => {
            let by_class = ds.indices_by_class();
            let k = by_class.len();
            (0..ds.len())
                .map(|_| {
                    let members = &by_class[rng.random_range(0..k)];
                    members[rng.random_range(0..members.len())]
                })
                .collect()
        }
    };
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
