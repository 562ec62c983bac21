//! Deterministic fixtures shared by the benchmarks.

use jackflow_core::sampling::random_ergodic_network;
use jackflow_core::ValidatedNetwork;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A random ergodic network of size `k`, fixed by `seed`.
pub fn network(k: usize, seed: u64) -> ValidatedNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_ergodic_network(k, (0.2, 0.8), &mut rng)
}

/// Interior target with unit-order components.
pub fn target(k: usize) -> Vec<f64> {
    (0..k).map(|i| 0.5 + 0.25 * i as f64).collect()
}
