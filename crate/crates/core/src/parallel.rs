use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f(0..trials)` on a pool of `threads` workers and returns the results
/// in trial order, so output never depends on the worker count.
pub(crate) fn map_trials<R, F>(trials: usize, threads: Option<usize>, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    let run = || (0..trials).into_par_iter().map(&f).collect::<Result<Vec<R>>>();
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}
