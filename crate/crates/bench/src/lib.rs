//! Shared fixtures for the benchmarks.

use asc_core::datagen::{draw_paired_samples, MixtureSpec};
use asc_core::Dataset;

/// Paired two-blob sample of `n` objects in the plane.
pub fn blobs(n: usize, seed: u64) -> (Dataset, Dataset) {
    let spec = MixtureSpec { n, k_true: 2, separation: 4.0, spread: 1.0, noise_sigma: 0.7, seed, ..Default::default() };
    let (x1, x2, _) = draw_paired_samples(&spec).expect("valid spec");
    (x1, x2)
}
