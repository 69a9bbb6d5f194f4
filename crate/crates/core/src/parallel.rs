//! Deterministic fan-out of independent trials over a worker pool.
//!
//! Trials are grouped into fixed-size chunks keyed only by trial index, so
//! the set of chunks (and the stream each trial sees) is the same for every
//! worker count. Results come back in chunk order.

use std::ops::Range;

use rayon::prelude::*;

/// Trials per work item.
pub const CHUNK: u64 = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Workers(usize);

impl Workers {
    pub fn new(n: usize) -> Self {
        Workers(n.max(1))
    }

    pub fn available() -> Self {
        Workers(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    pub fn get(&self) -> usize {
        self.0
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::available()
    }
}

fn chunks(trials: u64) -> Vec<Range<u64>> {
    (0..trials.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(trials))
        .collect()
}

/// Runs `f` once per chunk of trial indices and returns the per-chunk
/// results in index order.
pub fn map_chunks<T, F>(trials: u64, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync + Send,
{
    let work = chunks(trials);
    if workers.get() == 1 {
        return work.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.get())
        .build()
        .expect("thread pool");
    pool.install(|| work.into_par_iter().map(&f).collect())
}

/// Per-trial results, in trial order.
pub fn map_trials<T, F>(trials: u64, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_chunks(trials, workers, |r| r.map(&f).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_covers_all_trials() {
        let c = chunks(5000);
        assert_eq!(c.first().unwrap().start, 0);
        assert_eq!(c.last().unwrap().end, 5000);
        assert_eq!(c.iter().map(|r| r.end - r.start).sum::<u64>(), 5000);
        assert!(chunks(0).is_empty());
    }

    #[test]
    fn order_is_independent_of_workers() {
        let a = map_trials(10_000, Workers::new(1), |i| i * i);
        let b = map_trials(10_000, Workers::new(4), |i| i * i);
        let c = map_trials(10_000, Workers::new(16), |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}
