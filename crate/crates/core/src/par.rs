//! Execution mode for the data-parallel inner loops.
//!
//! With the `parallel` feature (on by default) batch operations fan out over
//! rayon's global pool. Without it, [`Exec::Parallel`] silently degrades to
//! the sequential path, so callers never need their own `cfg` switches.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch operation iterates over its items.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this mode will actually run on more than one thread.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

pub(crate) fn map<T, U, F>(exec: Exec, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Like [`map`], but stops at an error. The error reported is the one with the
/// lowest item index, independent of scheduling.
pub(crate) fn try_map<T, U, E, F>(exec: Exec, items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        // rayon's collect into Result keeps an arbitrary error; settle on the first one.
        let results: Vec<Result<U, E>> = items.par_iter().map(f).collect();
        return results.into_iter().collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}
