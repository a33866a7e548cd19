//! Deterministic data-parallel helpers.
//!
//! Work is split into chunks of a fixed width and partial results are
//! combined in chunk order, so the `parallel` feature, the worker count, and
//! run-to-run scheduling never change a single output bit. The sequential
//! variants walk the same chunk layout and are kept compiled under every
//! feature set; the benches compare them against the rayon paths.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk width for per-index kernels (sketch components, trials).
pub(crate) const CHUNK: usize = 64;

/// Half-open `(start, len)` chunk ranges covering `0..len`.
pub(crate) fn chunk_ranges(len: usize, chunk: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(len.div_ceil(chunk.max(1)));
    let mut start = 0;
    while start < len {
        let c = chunk.min(len - start);
        out.push((start, c));
        start += c;
    }
    out
}

/// Maps `f` over fixed chunks of `0..len`, sequentially, in chunk order.
pub(crate) fn map_chunks_seq<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    F: Fn(usize, usize) -> T,
{
    chunk_ranges(len, chunk)
        .into_iter()
        .map(|(s, c)| f(s, c))
        .collect()
}

/// Maps `f` over fixed chunks of `0..len` on the rayon pool; results are
/// collected in chunk order.
#[cfg(feature = "parallel")]
pub(crate) fn map_chunks_par<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync,
{
    chunk_ranges(len, chunk)
        .into_par_iter()
        .map(|(s, c)| f(s, c))
        .collect()
}

/// Chunked map using rayon when the `parallel` feature is on.
pub(crate) fn map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        map_chunks_par(len, chunk, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_chunks_seq(len, chunk, f)
    }
}

/// Maps `f` over `0..len`, one item at a time, preserving index order.
/// Used for coarse-grained work (independent seeded trials).
pub(crate) fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Sequential twin of [`map_indexed`], always available.
pub(crate) fn map_indexed_seq<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range() {
        for len in [0, 1, 63, 64, 65, 200] {
            let ranges = chunk_ranges(len, 64);
            let total: usize = ranges.iter().map(|&(_, c)| c).sum();
            assert_eq!(total, len);
            let mut expect = 0;
            for &(s, c) in &ranges {
                assert_eq!(s, expect);
                assert!(c > 0);
                expect += c;
            }
        }
    }

    #[test]
    fn par_matches_seq() {
        let f = |s: usize, c: usize| (s..s + c).map(|i| (i as f64).sqrt()).sum::<f64>();
        let a = map_chunks(1000, 64, f);
        let b = map_chunks_seq(1000, 64, f);
        assert_eq!(a, b);
    }
}
