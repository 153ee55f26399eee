use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DinoError, Result};

/// One worker's slice of the sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub indices: Vec<usize>,
    /// `|S_i| / n` over the samples actually used.
    pub weight: f64,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Deterministically shuffle `0..n` and split it into `m` equal shards.
///
/// When `m` does not divide `n` the trailing `n mod m` shuffled indices are
/// dropped so that every shard has size `n / m`.
pub fn partition(n: usize, m: usize, seed: u64) -> Result<Vec<Shard>> {
    if m == 0 {
        return Err(DinoError::Config("worker count must be positive".into()));
    }
    if m > n {
        return Err(DinoError::Config(format!(
            "cannot split {n} samples across {m} workers"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let size = n / m;
    if !n.is_multiple_of(m) {
        log::warn!(
            "{n} samples not divisible by {m} workers; dropping {} samples",
            n % m
        );
    }
    let used = (size * m) as f64;
    Ok(order
        .chunks_exact(size)
        .take(m)
        .map(|chunk| Shard {
            indices: chunk.to_vec(),
            weight: chunk.len() as f64 / used,
        })
        .collect())
}
