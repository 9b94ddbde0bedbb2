//! Thread-pool execution for protocol trials.
//!
//! Thread count resolution: `--threads` flag, then the
//! `SHALLOWFACE_THREADS` environment variable, then all available
//! cores. Results never depend on the count: jobs are mapped back to
//! their input order before any aggregation, so a run with one thread
//! and a run with eight produce byte-identical outputs.

use rayon::prelude::*;
use shallowface_core::protocol::JobMap;

use crate::error::CliError;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "SHALLOWFACE_THREADS";

/// Order-preserving rayon-backed executor.
pub struct Threads {
    pool: rayon::ThreadPool,
}

impl Threads {
    /// Builds a pool with the resolved thread count. `flag` wins over
    /// the environment variable; both absent means one worker per core.
    pub fn from_flag(flag: Option<usize>) -> Result<Self, CliError> {
        let count = match flag {
            Some(n) => Some(n),
            None => match std::env::var(THREADS_ENV) {
                Ok(raw) => Some(raw.parse::<usize>().map_err(|_| {
                    CliError::Usage(format!(
                        "{THREADS_ENV} must be a positive integer, got {raw:?}"
                    ))
                })?),
                Err(_) => None,
            },
        };
        if count == Some(0) {
            return Err(CliError::Usage(String::from(
                "thread count must be at least 1",
            )));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(count.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
        Ok(Self { pool })
    }
}

impl JobMap for Threads {
    fn run<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        // par_iter's collect preserves input order.
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}
