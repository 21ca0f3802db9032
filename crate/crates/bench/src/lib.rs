//! Shared fixtures for the criterion benches.

use conclab_core::measure::{sample_gaussian, DiscreteMeasure};
use conclab_core::rng::SeedStream;

/// Gaussian sample used as the common bench input.
pub fn gaussian_fixture(n: usize, atoms: usize) -> DiscreteMeasure {
    sample_gaussian(n, atoms, &SeedStream::new(0xBE7C)).expect("valid sampler arguments")
}
