//! Shared fixtures for the benchmarks.

use orthoreg::KernelMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gaussian `o × d` kernel with entries of variance `1/d`.
pub fn random_kernel(o: usize, d: usize, seed: u64) -> KernelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let data = (0..o * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect();
    KernelMatrix::from_rows(o, d, data).expect("positive shape")
}
