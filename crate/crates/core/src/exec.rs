//! Data-parallel execution helpers.
//!
//! With the `parallel` feature (default) these run on a shared rayon pool;
//! without it they fall back to plain sequential iteration. Callers only ever
//! fill index-addressed slots here — reductions happen outside, in a fixed
//! order — so the two modes produce bit-identical results.

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ABERRANT_MIX_THREADS";

#[cfg(feature = "parallel")]
mod imp {
    use super::THREADS_ENV;
    use rayon::prelude::*;
    use std::sync::OnceLock;

    fn pool() -> &'static rayon::ThreadPool {
        static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
        POOL.get_or_init(|| {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .filter(|&n| n > 0)
            {
                builder = builder.num_threads(n);
            }
            builder.build().expect("building rayon thread pool")
        })
    }

    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        pool().install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Evaluate `f(0), ..., f(n-1)` and collect the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    imp::map_indexed(n, f)
}

/// True when this build runs the rayon path.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let v = map_indexed(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }
}
