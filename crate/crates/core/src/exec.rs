//! Order-preserving parallel execution of independent tasks.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f` over `tasks` on `workers` threads and returns results in task
/// order. `workers == 0` uses one thread per available core.
///
/// Output does not depend on the worker count. The first failing task (by
/// index) fails the batch.
pub fn parallel_map<T, R, F>(tasks: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let raw: Vec<Result<R>> = if workers == 1 || tasks.len() <= 1 {
        tasks.iter().map(&f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(&f).collect())
    };
    raw.into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Task {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
