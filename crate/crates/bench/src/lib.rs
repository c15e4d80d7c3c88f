//! Shared fixtures for the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ternlut_core::{QuantizedActivations, TernaryMatrix};

pub fn random_ternary(m: usize, k: usize, seed: u64) -> TernaryMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..m * k).map(|_| rng.random_range(-1i8..=1)).collect();
    TernaryMatrix::new(m, k, values, 1.0).expect("valid ternary matrix")
}

pub fn random_activations(n: usize, k: usize, seed: u64) -> QuantizedActivations {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * k).map(|_| rng.random_range(-127i8..=127)).collect();
    QuantizedActivations::new(n, k, data, 1.0).expect("valid activations")
}
