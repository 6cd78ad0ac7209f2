//! Per-state sweeps, optionally spread over a thread pool.
//!
//! Results are collected in state order, so the outcome never depends on the
//! number of threads. `ICSG_THREADS` caps the pool size.

use crate::error::Result;

/// States below this count are always swept sequentially.
#[cfg(feature = "parallel")]
const PARALLEL_MIN_STATES: usize = 64;

#[cfg(feature = "parallel")]
fn pool() -> Option<&'static rayon::ThreadPool> {
    use std::sync::OnceLock;
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads: usize = std::env::var("ICSG_THREADS").ok()?.trim().parse().ok()?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .ok()
    })
    .as_ref()
}

#[cfg(feature = "parallel")]
pub fn sweep<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    use rayon::prelude::*;
    if n < PARALLEL_MIN_STATES {
        return (0..n).map(f).collect();
    }
    let run = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match pool() {
        Some(p) => p.install(run),
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn sweep<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n).map(f).collect()
}
