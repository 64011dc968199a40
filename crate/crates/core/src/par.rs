//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these run on the rayon pool; without
//! it they fall back to plain iterators. Every reduction goes through
//! [`chunked_sum`], which sums fixed-size chunks independently and then adds
//! the chunk results left to right. The grouping never depends on the thread
//! count, so floating-point results are bit-identical across pool sizes and
//! across the two builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for ordered reductions.
pub const REDUCE_CHUNK: usize = 16;

/// Maps `f` over `0..n` and collects the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over a slice and collects the results in order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Accumulator that can be summed in a fixed order.
pub trait Accumulate: Send {
    fn zero_like(&self) -> Self;
    fn add_assign(&mut self, other: &Self);
}

impl Accumulate for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_assign(&mut self, other: &Self) {
        *self += *other;
    }
}

impl Accumulate for Vec<f64> {
    fn zero_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += *b;
        }
    }
}

/// Deterministic sum of `f(i)` for `i in 0..n`.
///
/// Returns `None` when `n == 0`. Errors from `f` short-circuit the chunk they
/// occur in and the first one (by index) is returned.
pub fn chunked_sum<T, E, F>(n: usize, f: F) -> Result<Option<T>, E>
where
    T: Accumulate,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    if n == 0 {
        return Ok(None);
    }
    let n_chunks = n.div_ceil(REDUCE_CHUNK);
    let partials: Vec<Result<T, E>> = map_indexed(n_chunks, |c| {
        let start = c * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(n);
        let mut acc = f(start)?;
        for i in start + 1..end {
            acc.add_assign(&f(i)?);
        }
        Ok(acc)
    });
    let mut iter = partials.into_iter();
    let mut total = iter.next().expect("n > 0")?;
    for p in iter {
        total.add_assign(&p?);
    }
    Ok(Some(total))
}
