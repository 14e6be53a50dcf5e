//! Data-parallel execution helper.
//!
//! Hot loops (batch members in training, frames in alignment, states in
//! evaluation) run through [`ordered_map`], which fans work out with rayon
//! when the `parallel` feature is enabled and parallelism has not been turned
//! off at runtime. Results are always collected in input order and reduced
//! sequentially by the caller, so outputs are bit-identical whether the work
//! ran on one thread or many. Compiled without the feature the same code path
//! degrades to a plain sequential map.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL_ENABLED: AtomicBool = AtomicBool::new(true);

/// Globally enable or disable parallel execution at runtime. The sequential
/// path is also used whenever the crate is built without the `parallel`
/// feature.
pub fn set_parallel(enabled: bool) {
    PARALLEL_ENABLED.store(enabled, Ordering::Relaxed);
}

/// Whether the next [`ordered_map`] call will try to run in parallel.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL_ENABLED.load(Ordering::Relaxed)
}

/// Configure the rayon thread pool size. Must be called before the pool is
/// first used; later calls are ignored. No-op without the `parallel` feature.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// Map `f` over `0..n`, returning results in index order.
pub fn ordered_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel_enabled() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Map `f` over a slice, returning results in input order.
pub fn ordered_map_slice<'a, T, R, F>(items: &'a [T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&'a T) -> R + Sync + Send,
{
    ordered_map(items.len(), |i| f(&items[i]))
}
