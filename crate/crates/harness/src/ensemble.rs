//! Parallel ensembles with results in trajectory order.

use rayon::prelude::*;

use crate::error::{config_err, HarnessError, Result};

/// Environment variable that overrides every other thread setting.
pub const THREADS_ENV: &str = "HARNESS_THREADS";

/// Thread count: `HARNESS_THREADS`, then the command-line flag, then the
/// config, then the number of available cores.
pub fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => config_err(format!("{THREADS_ENV} must be a positive integer, got '{v}'")),
        };
    }
    let n = flag
        .or(config)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    if n == 0 {
        return config_err("thread count must be >= 1");
    }
    Ok(n)
}

/// Runs `f(0..m)` on a pool of `threads` workers. Each trajectory owns its
/// random streams, so the output does not depend on `threads`.
pub fn run_ensemble<T, F>(m: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    pool.install(|| (0..m as u64).into_par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_threads() {
        let f = |i: u64| Ok(i * i);
        let a = run_ensemble(100, 1, f).unwrap();
        let b = run_ensemble(100, 4, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn first_error_is_reported() {
        let r = run_ensemble(10, 2, |i| if i == 3 { config_err("boom") } else { Ok(i) });
        assert!(r.is_err());
    }
}
