//! Execution-mode dispatch for the data-parallel loops.
//!
//! Every hot loop in the crate (ensemble members, loss/gradient chunks,
//! bootstrap resamples, permutation tests) goes through [`map_range`]. With the
//! `parallel` feature the work is spread over the rayon pool; without it, or
//! inside [`with_mode`]`(ExecMode::Sequential, ..)`, it runs on the calling
//! thread. Results are always returned in index order and reduced with
//! [`pairwise_sum`], so both modes produce bitwise-identical output.

use std::cell::Cell;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

thread_local! {
    static MODE: Cell<ExecMode> = Cell::new(ExecMode::default());
}

/// Mode used by [`map_range`] on the current thread.
pub fn current_mode() -> ExecMode {
    MODE.with(|m| m.get())
}

/// Run `f` with the given execution mode on this thread, restoring the
/// previous mode afterwards.
pub fn with_mode<R>(mode: ExecMode, f: impl FnOnce() -> R) -> R {
    struct Restore(ExecMode);
    impl Drop for Restore {
        fn drop(&mut self) {
            MODE.with(|m| m.set(self.0));
        }
    }
    let _restore = Restore(MODE.with(|m| m.replace(mode)));
    f()
}

/// Evaluate `f(0), .., f(n-1)` and collect the results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match current_mode() {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Split `0..n` into consecutive chunks of `chunk` indices and map each chunk.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    map_range(n_chunks, |c| {
        let lo = c * chunk;
        f(lo..(lo + chunk).min(n))
    })
}

/// Fixed-shape pairwise (tree) summation; the result depends only on the
/// order of `values`, never on thread scheduling.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        // from +0 so that an empty sum is +0, not -0
        return values.iter().fold(0.0, |a, b| a + b);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Element-wise pairwise reduction of equally sized vectors.
pub fn pairwise_sum_vecs(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    if parts.is_empty() {
        return Vec::new();
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += *y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}
