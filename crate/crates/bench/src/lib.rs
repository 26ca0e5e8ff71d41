//! Shared workloads for the benchmarks.

use cachefx_core::{LineAddress, RngStream};
use rand::Rng;

/// `n` uniformly random line addresses below `span`.
pub fn random_lines(n: usize, span: u64, seed: u64) -> Vec<LineAddress> {
    let mut rng = RngStream::new(seed);
    (0..n)
        .map(|_| LineAddress::new(rng.gen_range(0..span)))
        .collect()
}
