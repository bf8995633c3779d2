//! Sequential / data-parallel execution switch.
//!
//! Every parallel map in the crate goes through [`Execution::map_collect`],
//! which preserves input order. Reductions over the collected results are
//! always done sequentially, so both modes produce identical numbers.

/// How batch-level work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// Uses the global rayon pool when the `parallel` feature is enabled,
    /// otherwise falls back to sequential execution.
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `0..len` and collects the results in index order.
    pub fn map_collect<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }
}
