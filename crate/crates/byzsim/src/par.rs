//! Data-parallel dispatch with a sequential fallback.
//!
//! With the `parallel` feature (default), indexed maps fan out over a rayon
//! pool sized by the `BYZSIM_THREADS` environment variable; without it, or
//! with `BYZSIM_THREADS=1`, everything runs sequentially. Results are always
//! collected in index order and reduced sequentially, so the outcome is
//! bit-identical regardless of thread count.

#[cfg(feature = "parallel")]
use std::sync::OnceLock;

pub const THREADS_ENV: &str = "BYZSIM_THREADS";

/// Effective thread cap: `BYZSIM_THREADS` when set and valid, otherwise the
/// number of available CPUs. Always at least 1.
pub fn thread_cap() -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var(THREADS_ENV) {
        Ok(s) => s.trim().parse::<usize>().ok().filter(|&n| n > 0).unwrap_or(available),
        Err(_) => available,
    }
}

#[cfg(feature = "parallel")]
fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_cap())
            .build()
            .expect("rayon pool construction")
    })
}

/// Map `f` over `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if thread_cap() == 1 || n < 2 {
        (0..n).map(f).collect()
    } else {
        use rayon::prelude::*;
        pool().install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}

/// Map `f` over mutable slice elements in parallel, in place.
#[cfg(feature = "parallel")]
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync,
{
    if thread_cap() == 1 || items.len() < 2 {
        for (i, item) in items.iter_mut().enumerate() {
            f(i, item);
        }
    } else {
        use rayon::prelude::*;
        pool().install(|| {
            items
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, item)| f(i, item))
        });
    }
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync,
{
    for (i, item) in items.iter_mut().enumerate() {
        f(i, item);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let out = map_indexed(100, |i| i * i);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, i * i);
        }
    }

    #[test]
    fn for_each_mut_touches_all() {
        let mut xs = vec![0usize; 50];
        for_each_mut(&mut xs, |i, x| *x = i + 1);
        for (i, x) in xs.iter().enumerate() {
            assert_eq!(*x, i + 1);
        }
    }
}
