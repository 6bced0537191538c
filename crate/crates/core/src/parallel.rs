//! Order-preserving parallel map used by every multi-unit computation.
//!
//! Results always come back in input order, and errors are reported for the
//! first failing unit in that order, so output never depends on the worker
//! count or on scheduling.

use rayon::prelude::*;
use rayon::ThreadPool;

pub struct Workers {
    count: usize,
    pool: Option<ThreadPool>,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers").field("count", &self.count).finish()
    }
}

impl Workers {
    pub fn new(count: usize) -> Self {
        let count = count.max(1);
        let pool = if count > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(count)
                .build()
                .ok()
        } else {
            None
        };
        Self { count, pool }
    }

    pub fn single() -> Self {
        Self::new(1)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            None => items.iter().map(f).collect(),
        }
    }

    /// Like [`Workers::map`] but stops at the first error in input order.
    pub fn try_map<T, R, E, F>(&self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::single()
    }
}
