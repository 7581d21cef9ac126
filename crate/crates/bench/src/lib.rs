//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signet_core::data::{DISSIMILAR, SIMILAR};
use signet_core::eval::DistanceRecord;
use signet_core::Tensor;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("valid shape")
}

/// `n` records, half of each class, with overlapping distance ranges.
pub fn random_records(n: usize, seed: u64) -> Vec<DistanceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|pair| {
            let y = if pair % 2 == 0 { SIMILAR } else { DISSIMILAR };
            let centre = if y == SIMILAR { 0.6 } else { 1.2 };
            DistanceRecord { pair, y, distance: (centre + rng.random_range(-0.5..0.5f64)).max(0.0) }
        })
        .collect()
}
