//! Execution kernels shared by the numeric stages.
//!
//! Parallelism is restricted to two shapes so results cannot depend on
//! thread scheduling:
//!
//! * [`map_indexed`] — independent per-index work, order-preserving collect;
//! * [`map_chunks`] — partial results over fixed-size index chunks, which
//!   callers must combine sequentially in chunk order.
//!
//! Floating-point reductions therefore associate identically under the
//! `parallel` feature and the sequential fallback, making the two paths
//! bitwise equal.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed reduction granularity. Changing this changes the association
/// order of chunked sums, and with it the low bits of results.
pub(crate) const CHUNK: usize = 1024;

pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Partial results over `CHUNK`-sized ranges of `0..n`, in chunk order.
pub(crate) fn map_chunks<P, F>(n: usize, f: F) -> Vec<P>
where
    P: Send,
    F: Fn(Range<usize>) -> P + Sync + Send,
{
    let ranges = chunk_ranges(n);
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

fn chunk_ranges(n: usize) -> Vec<Range<usize>> {
    let mut ranges = Vec::with_capacity(n.div_ceil(CHUNK));
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        ranges.push(start..end);
        start = end;
    }
    ranges
}

/// Sum of `f(i)` for `i in 0..n`, associated in fixed chunk order.
pub(crate) fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(n, |r| r.map(&f).sum::<f64>()).iter().sum()
}
