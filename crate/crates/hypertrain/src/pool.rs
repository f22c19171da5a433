use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hypertrain_core::exec::Executor;

/// Caps the worker count of [`Threads::from_env`].
pub const THREADS_VAR: &str = "HYPERTRAIN_THREADS";

/// Runs jobs on scoped worker threads that pull indices from a shared
/// counter. Results are returned in index order regardless of timing.
#[derive(Clone, Copy, Debug)]
pub struct Threads {
    workers: NonZeroUsize,
}

impl Threads {
    pub fn new(workers: NonZeroUsize) -> Self {
        Threads { workers }
    }

    /// Available parallelism, capped by `HYPERTRAIN_THREADS` when it holds a
    /// positive integer.
    pub fn from_env() -> Self {
        let available = std::thread::available_parallelism().unwrap_or(NonZeroUsize::MIN);
        let cap = std::env::var(THREADS_VAR)
            .ok()
            .and_then(|v| v.trim().parse::<NonZeroUsize>().ok());
        Threads {
            workers: cap.map_or(available, |c| c.min(available)),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers.get()
    }
}

impl Executor for Threads {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.workers.get().min(n);
        if workers <= 1 {
            return (0..n).map(job).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let out = job(i);
                    slots.lock().expect("no worker panics while holding the lock")[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|v| v.expect("every index ran"))
            .collect()
    }
}
