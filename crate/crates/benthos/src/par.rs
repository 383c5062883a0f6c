//! Deterministic data-parallel execution.
//!
//! Work is cut into fixed-size index batches; each batch is processed
//! sequentially and batch results are merged in batch order. Scheduling and
//! worker count therefore cannot affect results, only wall time. With the
//! `parallel` feature disabled the same batches run on the calling thread.

use std::ops::Range;

/// Paths per batch in ensemble runs. Fixed so that results are identical
/// between the parallel and sequential drivers.
pub(crate) const BATCH: usize = 32;

fn ranges(n: usize, batch: usize) -> Vec<Range<usize>> {
    let batch = batch.max(1);
    (0..n.div_ceil(batch))
        .map(|b| b * batch..((b + 1) * batch).min(n))
        .collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn batched<B, F>(n: usize, batch: usize, work: F) -> Vec<B>
where
    B: Send,
    F: Fn(Range<usize>) -> B + Sync + Send,
{
    use rayon::prelude::*;
    ranges(n, batch).into_par_iter().map(work).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn batched<B, F>(n: usize, batch: usize, work: F) -> Vec<B>
where
    B: Send,
    F: Fn(Range<usize>) -> B + Sync + Send,
{
    ranges(n, batch).into_iter().map(work).collect()
}

/// Always-sequential driver with the same batching; the criterion bench
/// compares this against `batched`, and the two must agree bit for bit.
pub(crate) fn batched_serial<B, F>(n: usize, batch: usize, work: F) -> Vec<B>
where
    B: Send,
    F: Fn(Range<usize>) -> B + Sync + Send,
{
    ranges(n, batch).into_iter().map(work).collect()
}
