//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] maps over
//! rayon's global pool; without it both variants run on the calling thread.

/// How per-ID and per-chunk work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Order-preserving map over a slice.
pub(crate) fn map_slice<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Splits `0..len` into chunks, maps each, and folds the results in chunk order.
pub(crate) fn chunked_reduce<U, M, R>(
    exec: Execution,
    len: usize,
    chunk: usize,
    identity: U,
    map: M,
    reduce: R,
) -> U
where
    U: Send + Clone + Sync,
    M: Fn(std::ops::Range<usize>) -> U + Sync + Send,
    R: Fn(U, U) -> U + Sync + Send,
{
    let chunk = chunk.max(1);
    let ranges: Vec<_> = (0..len)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(len))
        .collect();
    map_slice(exec, &ranges, |r| map(r.clone()))
        .into_iter()
        .fold(identity, reduce)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let items: Vec<u32> = (0..1000).collect();
        let seq = map_slice(Execution::Sequential, &items, |x| x * 2);
        let par = map_slice(Execution::Parallel, &items, |x| x * 2);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 1998);
    }

    #[test]
    fn chunked_reduce_covers_every_index() {
        for len in [0, 1, 7, 64, 1000] {
            for chunk in [1, 3, 64, 5000] {
                let sum = chunked_reduce(
                    Execution::Parallel,
                    len,
                    chunk,
                    0usize,
                    |r| r.sum::<usize>(),
                    |a, b| a + b,
                );
                assert_eq!(sum, (0..len).sum::<usize>());
            }
        }
    }
}
