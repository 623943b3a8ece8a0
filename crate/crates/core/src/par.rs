//! Row-level parallelism helper.
//!
//! Heavy pairwise loops are organized as independent per-row tasks whose
//! results are collected in index order and combined sequentially, so the
//! parallel and sequential engines produce bit-identical output. A runtime
//! `deterministic` flag forces the sequential engine regardless of the
//! `parallel` feature, which pins execution for reproducibility-sensitive
//! callers and gives benchmarks both engines to compare.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn map_rows<T, F>(n: usize, deterministic: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !deterministic {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = deterministic;
    (0..n).map(f).collect()
}
