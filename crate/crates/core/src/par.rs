//! Row-level data parallelism.
//!
//! Every helper here has a rayon implementation (feature `parallel`) and a
//! sequential one. Callers never depend on scheduling: outputs are written
//! to disjoint rows and reductions are folded in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(row_index, row)` for every `width`-sized chunk of `data`.
pub fn for_each_row_mut<T, F>(data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| f(y, row));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| f(y, row));
}

/// Evaluates `f(i)` for `i in 0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

/// Sums `f(row)` over rows; partial sums are added in row order.
pub fn sum_rows<F>(height: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_range(height, f).into_iter().sum()
}

/// Component-wise sum of per-row vectors of length `len`, in row order.
pub fn sum_rows_vec<F>(height: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    map_range(height, f)
        .into_iter()
        .fold(vec![0.0; len], |mut acc, part| {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
            acc
        })
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `workers` is `None`. Without the `parallel` feature `f` simply runs
/// on the calling thread.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("failed to build worker pool");
        return pool.install(f);
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    f()
}

/// True when the crate was built with rayon support.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_sums_are_ordered_and_exact() {
        let s = sum_rows(4, |y| (y as f64) * 0.1);
        assert_eq!(s, 0.0 + 0.1 + 0.2 + 0.30000000000000004);
        let v = sum_rows_vec(3, 2, |y| vec![y as f64, 1.0]);
        assert_eq!(v, vec![3.0, 3.0]);
    }

    #[test]
    fn single_worker_matches_default_pool() {
        let a = with_workers(Some(1), || map_range(100, |i| (i as f64).sqrt()));
        let b = map_range(100, |i| (i as f64).sqrt());
        assert_eq!(a, b);
    }
}
