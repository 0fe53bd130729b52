//! Fixtures shared by the benchmarks.

use histwalk_core::{IncrementDistribution, ModelSpec};

/// Two unit-variance Gaussian regimes with means 0 and 1 and threshold 0.4.
pub fn l1_gaussian(window: usize) -> ModelSpec {
    ModelSpec::new(
        vec![
            IncrementDistribution::gaussian(0.0, 1.0).unwrap(),
            IncrementDistribution::gaussian(1.0, 1.0).unwrap(),
        ],
        vec![0.4],
        window,
        0,
    )
    .unwrap()
}

/// Two Rademacher regimes biased down and up, threshold 0.
pub fn l1_rademacher(window: usize) -> ModelSpec {
    ModelSpec::new(
        vec![
            IncrementDistribution::rademacher(0.3).unwrap(),
            IncrementDistribution::rademacher(0.7).unwrap(),
        ],
        vec![0.0],
        window,
        0,
    )
    .unwrap()
}
