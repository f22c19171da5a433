//! Pluggable execution of independent jobs.

use alloc::vec::Vec;

/// Runs `n` independent jobs and returns their results in index order.
///
/// Implementations may run jobs concurrently; callers must not rely on
/// evaluation order, only on the order of the returned vector.
pub trait Executor {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs jobs one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(job).collect()
    }
}
