//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default), [`map_indexed`] fans work out over
//! the rayon pool; results are collected in index order, so any reduction
//! the caller performs is order-fixed and thread-count-invariant. Without
//! the feature, or when `Parallelism::Sequential` is selected at runtime,
//! the same closure runs on one thread. The criterion bench suite compares
//! the two paths.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Rayon,
    Sequential,
}

#[cfg(feature = "parallel")]
pub fn map_indexed<T, U, F>(items: &[T], par: Parallelism, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    match par {
        Parallelism::Rayon => items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect(),
        Parallelism::Sequential => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, U, F>(items: &[T], _par: Parallelism, f: F) -> Vec<U>
where
    F: Fn(usize, &T) -> U,
{
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Caps the global rayon pool. Call once, before any parallel work; later
/// calls are ignored by rayon. No-op without the `parallel` feature.
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_preserve_index_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_indexed(&items, Parallelism::Sequential, |i, x| i as u64 + x * 3);
        let par = map_indexed(&items, Parallelism::Rayon, |i, x| i as u64 + x * 3);
        assert_eq!(seq, par);
    }
}
