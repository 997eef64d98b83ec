//! Datasets: synthetic mixtures, IDX import/export, long-tail subsampling,
//! index streams and corruption.

pub mod dataset;
pub mod idx;
pub mod longtail;
pub mod sampler;
pub mod synth;
pub mod task;

pub use dataset::Dataset;
pub use idx::{feature_range, load_idx, quantize_range, quantize_unit, write_idx};
pub use longtail::{apply_long_tail, LongTailSpec};
pub use sampler::{make_index_stream, SamplerMode, Sampling};
pub use synth::{corrupt_gaussian, gen_gaussian_mixture, GaussianMixture};
pub use task::{build_task, TaskSpec};
