//! Data-parallel helpers with a sequential fallback.
//!
//! The hot loops in this crate (loss/gradient accumulation over sample
//! points, exhaustive grid evaluation, experiment cells) are maps over
//! independent items. With the `parallel` feature (default) they run on
//! rayon; without it the same helpers run sequentially.
//!
//! Reductions are chunked: items are split into fixed-size blocks, each
//! block is folded sequentially, and the per-block results are combined in
//! block order. The floating-point operation order is therefore identical
//! whether the blocks run on one thread or many, which keeps every seeded
//! run bit-reproducible.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use std::sync::atomic::{AtomicBool, Ordering};

/// Default block size for chunked reductions.
pub const DEFAULT_CHUNK: usize = 64;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Runs `f` with the parallel helpers forced onto their sequential path.
///
/// Intended for benchmarks comparing the two paths; the flag is global, so
/// do not call this concurrently with parallel work you want parallel.
pub fn sequential_scope<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.swap(true, Ordering::SeqCst);
    let out = f();
    FORCE_SEQUENTIAL.store(prev, Ordering::SeqCst);
    out
}

#[cfg(feature = "parallel")]
fn sequential_forced() -> bool {
    FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Maps `f` over `items`, preserving order.
pub fn map_collect<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    if !sequential_forced() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Chunked fold-then-combine over `items`.
///
/// Each chunk is folded left-to-right with `fold`; chunk accumulators are
/// then combined left-to-right with `combine`. `init` builds an empty
/// accumulator. The association of operations is fixed by `chunk`, not by
/// the thread count.
pub fn chunked_reduce<T, A>(
    items: &[T],
    chunk: usize,
    init: impl Fn() -> A + Sync + Send,
    fold: impl Fn(&mut A, &T) + Sync + Send,
    combine: impl Fn(&mut A, A),
) -> A
where
    T: Sync,
    A: Send,
{
    let chunk = chunk.max(1);
    let partials = chunk_partials(items, chunk, &init, &fold);
    let mut acc = init();
    for p in partials {
        combine(&mut acc, p);
    }
    acc
}

fn chunk_partials<T: Sync, A: Send>(
    items: &[T],
    chunk: usize,
    init: &(impl Fn() -> A + Sync + Send),
    fold: &(impl Fn(&mut A, &T) + Sync + Send),
) -> Vec<A> {
    let run = |block: &[T]| {
        let mut acc = init();
        for item in block {
            fold(&mut acc, item);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    if !sequential_forced() {
        return items.par_chunks(chunk).map(run).collect();
    }
    items.chunks(chunk).map(run).collect()
}

/// Finds the maximizing index/value pair of `score` over `0..n`.
///
/// Ties prefer the lowest index, independent of scheduling. Returns `None`
/// for `n == 0` or if every score is NaN.
pub fn argmax_by_index(n: usize, chunk: usize, score: impl Fn(usize) -> f64 + Sync + Send) -> Option<(usize, f64)> {
    let indices: Vec<usize> = (0..n).collect();
    let best = chunked_reduce(
        &indices,
        chunk.max(1),
        || None::<(usize, f64)>,
        |acc, &i| {
            let s = score(i);
            if s.is_nan() {
                return;
            }
            let better = match acc {
                None => true,
                Some((_, cur)) => s > *cur,
            };
            if better {
                *acc = Some((i, s));
            }
        },
        |acc, other| {
            if let Some((i, s)) = other {
                let better = match acc {
                    None => true,
                    Some((bi, cur)) => s > *cur || (s == *cur && i < *bi),
                };
                if better {
                    *acc = Some((i, s));
                }
            }
        },
    );
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_reduce_matches_sequential_sum() {
        let items: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let par = chunked_reduce(&items, 64, || 0.0, |a, x| *a += x, |a, b| *a += b);
        let seq = sequential_scope(|| {
            chunked_reduce(&items, 64, || 0.0, |a, x| *a += x, |a, b| *a += b)
        });
        assert_eq!(par.to_bits(), seq.to_bits());
    }

    #[test]
    fn map_collect_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = map_collect(&items, |&i| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        let scores = [1.0, 3.0, 3.0, 2.0];
        let (i, s) = argmax_by_index(scores.len(), 2, |i| scores[i]).unwrap();
        assert_eq!(i, 1);
        assert_eq!(s, 3.0);
    }

    #[test]
    fn argmax_empty_is_none() {
        assert!(argmax_by_index(0, 8, |_| 0.0).is_none());
    }
}
