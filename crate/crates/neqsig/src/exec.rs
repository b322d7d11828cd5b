//! Deterministic batched execution, parallel or sequential.
//!
//! Rayon's `ParallelIterator` does not guarantee a fixed work split, so
//! every bulk loop in this crate is cut into fixed-size batches first and
//! each batch derives its own RNG stream from `(seed, purpose, batch)`.
//! The output is then bitwise identical whether the batches run on one
//! thread or many, and identical with the `parallel` feature disabled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items handled per RNG stream. Fixed: changing it changes
/// which stream serves which index and therefore the sampled values.
pub const BATCH_SIZE: u64 = 8192;

/// Purpose tags keeping RNG streams of unrelated subsystems disjoint
/// even under a shared top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    LambdaSampling = 1,
    Protocol = 2,
    Arrangement = 3,
    BornSampling = 4,
    ModePhases = 5,
    InitialEnsemble = 6,
}

/// RNG for one batch of one purpose. ChaCha streams are independent, so
/// `(purpose, batch)` packed into the stream id gives non-overlapping
/// sequences for every batch of every subsystem.
pub fn batch_rng(seed: u64, purpose: Purpose, batch: u64) -> ChaCha8Rng {
    debug_assert!(batch < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | batch);
    rng
}

/// Runs `fill(batch_index, start, out_slice)` over `count` items split into
/// fixed batches, writing results in index order.
pub fn batched_fill<T, F>(count: u64, fill: F) -> Vec<T>
where
    T: Send + Default + Clone,
    F: Fn(u64, u64, &mut [T]) + Sync,
{
    let mut out = vec![T::default(); count as usize];
    batched_fill_into(&mut out, fill);
    out
}

#[cfg(feature = "parallel")]
pub fn batched_fill_into<T, F>(out: &mut [T], fill: F)
where
    T: Send,
    F: Fn(u64, u64, &mut [T]) + Sync,
{
    out.par_chunks_mut(BATCH_SIZE as usize)
        .enumerate()
        .for_each(|(batch, chunk)| {
            let start = batch as u64 * BATCH_SIZE;
            fill(batch as u64, start, chunk);
        });
}

#[cfg(not(feature = "parallel"))]
pub fn batched_fill_into<T, F>(out: &mut [T], fill: F)
where
    T: Send,
    F: Fn(u64, u64, &mut [T]) + Sync,
{
    batched_fill_into_seq(out, fill);
}

/// Sequential variant with identical batching, so its output is bitwise
/// equal to the parallel path. Public for benchmarking the two paths
/// against each other.
pub fn batched_fill_into_seq<T, F>(out: &mut [T], fill: F)
where
    T: Send,
    F: Fn(u64, u64, &mut [T]) + Sync,
{
    for (batch, chunk) in out.chunks_mut(BATCH_SIZE as usize).enumerate() {
        let start = batch as u64 * BATCH_SIZE;
        fill(batch as u64, start, chunk);
    }
}

/// Maps `f` over items in parallel (or sequentially without the feature),
/// preserving index order.
#[cfg(feature = "parallel")]
pub fn indexed_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}
