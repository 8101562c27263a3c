//! Index-parallel helpers with a deterministic result order.
//!
//! With the `parallel` feature the work is spread over the rayon pool; without
//! it everything runs on the calling thread. Reductions always combine partial
//! results in index order, so both builds produce bit-identical output.

use crate::linalg::{zeros, CMat};

/// Fixed chunk length for reductions. Independent of the thread count on purpose.
pub const CHUNK: usize = 64;

#[cfg(feature = "parallel")]
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sums `f(i)` for `i < n` into an `rows x cols` matrix.
pub fn sum_matrices<F>(n: usize, rows: usize, cols: usize, f: F) -> CMat
where
    F: Fn(usize, &mut CMat) + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partials = map(chunks, |c| {
        let mut acc = zeros(rows, cols);
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            f(i, &mut acc);
        }
        acc
    });
    let mut total = zeros(rows, cols);
    for p in partials {
        total += p;
    }
    total
}

/// Runs `f` inside a pool of `threads` workers when the parallel feature is on.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Some(t) = threads {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
