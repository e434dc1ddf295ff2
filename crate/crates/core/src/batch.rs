//! Deterministic batch execution: order-preserving fan-out over independent
//! work items, parallel when the `parallel` feature is enabled (the
//! default), with a sequential fallback that produces identical results.
//!
//! Determinism rule: work items never share mutable state or an RNG stream.
//! Each item derives its own seed with [`derive_seed`], and reductions
//! either preserve item order (`run_indexed`) or are exact and
//! order-independent (`sum_u64`), so the output is byte-identical whether
//! the batch ran on one thread or many.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use sha2::{Digest, Sha256};

/// Derives an independent sub-seed from a base seed, a role label, and an
/// index. Stable across platforms and releases of this crate's dependencies
/// (it is plain SHA-256).
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_be_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_be_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Maps `f` over `0..count`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn run_indexed<O: Send>(count: usize, f: impl Fn(usize) -> O + Sync + Send) -> Vec<O> {
    (0..count).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..count`, preserving index order in the output.
#[cfg(not(feature = "parallel"))]
pub fn run_indexed<O>(count: usize, f: impl Fn(usize) -> O) -> Vec<O> {
    (0..count).map(f).collect()
}

/// Sums `f` over `0..count`; exact because the reduction is integral.
#[cfg(feature = "parallel")]
pub fn sum_u64(count: usize, f: impl Fn(usize) -> u64 + Sync + Send) -> u64 {
    (0..count).into_par_iter().map(f).sum()
}

/// Sums `f` over `0..count`; exact because the reduction is integral.
#[cfg(not(feature = "parallel"))]
pub fn sum_u64(count: usize, f: impl Fn(usize) -> u64) -> u64 {
    (0..count).map(f).sum()
}

/// Always-sequential variant of [`run_indexed`], kept callable regardless of
/// features so benchmarks can compare the two execution modes directly.
pub fn run_indexed_sequential<O>(count: usize, f: impl Fn(usize) -> O) -> Vec<O> {
    (0..count).map(f).collect()
}

/// Always-sequential variant of [`sum_u64`].
pub fn sum_u64_sequential(count: usize, f: impl Fn(usize) -> u64) -> u64 {
    (0..count).map(f).sum()
}
