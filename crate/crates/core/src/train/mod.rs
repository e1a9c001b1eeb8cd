//! Deterministic training loop, evaluation, and variant comparison.

pub mod compare;
pub mod dataset;
pub mod eval;
pub mod optimizer;
pub mod qualitative;
pub mod runner;

pub use compare::{compare_variants, ComparisonReport, VariantOutcome, VariantSpec};
pub use dataset::{DatasetSource, PreparedDataset, TrajAxis, TrajectoryTaskConfig};
pub use eval::{evaluate_nll, nll_from_samples};
pub use optimizer::{clip_scale, grad_norm, Adam, AdamConfig};
pub use qualitative::{dump_qualitative, QualitativeDump};
pub use runner::{train, MetricsLog, MetricsRow, TrainConfig, TrainResult};

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Collision-resistant seed derivation for independent RNG uses.
pub(crate) fn mix2(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a).wrapping_add(b))
}

pub(crate) fn mix3(a: u64, b: u64, c: u64) -> u64 {
    mix2(mix2(a, b), c)
}
