//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel loop in the crate goes through [`map_indexed`]. Work items
//! are addressed by index and results are collected in index order, so the
//! output never depends on scheduling. Randomness inside a work item must come
//! from [`stream`], which derives an independent generator from a base seed
//! and the item's coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon thread pool. Falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    pub fn map_indexed<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => par_map(n, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Maps `f` over `0..n` with the default execution mode.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    Execution::default().map_indexed(n, f)
}

/// Independent random stream for work item `index` under `seed`.
///
/// `domain` separates unrelated consumers (chains, ensemble members, noise)
/// that share a seed.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

/// Mixes a 64-bit value; used to derive sub-seeds.
pub fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
