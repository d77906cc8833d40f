//! Execution shim: rayon-backed data parallelism when the `parallel` feature
//! is on, plain iterators otherwise.
//!
//! Every kernel here produces bit-identical output in both modes: reductions
//! split work into fixed-size chunks and combine chunk results in index order,
//! so the floating-point summation tree does not depend on thread scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows per reduction chunk. Also the granularity that decides the summation
/// order, so changing it changes results in the last bits.
pub const CHUNK: usize = 64;

/// Minimum amount of work (roughly flops) before `Exec::auto` goes parallel.
pub const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Exec {
    /// Parallel when the feature is compiled in and `work` clears the threshold.
    pub fn auto(work: usize) -> Self {
        if cfg!(feature = "parallel") && work >= PAR_THRESHOLD {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    /// The mode actually used: `Parallel` degrades to `Sequential` without the feature.
    pub fn effective(self) -> Self {
        if cfg!(feature = "parallel") {
            self
        } else {
            Exec::Sequential
        }
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec.effective() {
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Maps over a slice, possibly in parallel, preserving order.
pub fn map_slice<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec.effective() {
        #[cfg(feature = "parallel")]
        Exec::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Chunked vector reduction over `0..n`: each chunk of `CHUNK` indices is
/// folded into a zeroed accumulator of length `len`, then the chunk partials
/// are summed in chunk order.
pub fn sum_vectors<F>(exec: Exec, n: usize, len: usize, fold: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let mut acc = vec![0.0; len];
        let lo = c * CHUNK;
        fold(lo..(lo + CHUNK).min(n), &mut acc);
        acc
    };
    if chunks <= 1 {
        return if n == 0 { vec![0.0; len] } else { partial(0) };
    }
    let partials = map_range(exec, chunks, partial);
    let mut out = vec![0.0; len];
    for p in &partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// Chunked scalar reduction over `0..n`, combined in chunk order.
pub fn sum_scalar<F>(exec: Exec, n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        (lo..(lo + CHUNK).min(n)).map(&term).sum::<f64>()
    };
    map_range(exec, chunks, partial).into_iter().sum()
}
