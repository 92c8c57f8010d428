//! Data-parallel helpers.
//!
//! Hot loops (angle grids, delta ladders, envelope grids, certification
//! pairs) go through `map_indexed`, which fans out over rayon when the
//! `parallel` feature is enabled and falls back to a plain iterator
//! otherwise. Results come back in index order either way, and every
//! probe keeps its internal summation order fixed, so outputs do not
//! depend on the schedule.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Always-sequential twin of `map_indexed`, kept compiled under both
/// feature configurations so benchmarks can compare the two paths.
#[allow(dead_code)]
pub(crate) fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Cap the global worker count. A no-op in sequential builds; errors if
/// the pool was already started.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> crate::error::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::error::Error::InvalidInput(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> crate::error::Result<()> {
    Ok(())
}
