//! Order-preserving data-parallel map.
//!
//! All hot loops (per-item simulator draws, per-episode gradient batches,
//! per-day evaluation) funnel through [`map_ordered`]. With the `parallel`
//! feature it fans out over rayon; without it the same closure runs
//! sequentially. Results come back in input order and every floating-point
//! reduction downstream is performed sequentially over that ordered output,
//! so both builds are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every element, returning results in input order.
#[cfg(feature = "parallel")]
pub fn map_ordered<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Applies `f` to every element, returning results in input order.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Sequential variant, kept available in all builds for benchmarks.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
