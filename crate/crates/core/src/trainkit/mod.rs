//! SGD with momentum, learning-rate schedules, the training pipeline
//! (representation stage with optional deferred re-weighting, then optional
//! classifier re-training), evaluation and the noise sweep.

pub mod eval;
pub mod schedule;
pub mod sgd;
pub mod train;

use rayon::prelude::*;

pub use eval::{
    evaluate, noise_robustness, Bucket, Buckets, EvalReport, GroupAccuracy, NoiseRow,
    DEFAULT_SIGMAS,
};
pub use schedule::{lr_at, LrSchedule};
pub use sgd::sgd_step;
pub use train::{
    build_objective, retrain_classifier_crt, train, train_epoch, CrtConfig, EpochRecord, LossKind,
    TrainConfig, TrainState,
};

/// Mixes a run seed and a stream id into an independent 64-bit seed
/// (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `f(0..n)` on the worker pool. Results come back in index order, so
/// the output does not depend on scheduling.
pub fn parallel_runs<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
