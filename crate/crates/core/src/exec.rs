//! Execution policy for the per-cell loops.
//!
//! Every cell update within a time level reads only the previous level, so
//! the loops are embarrassingly parallel. With the `parallel` feature the
//! [`ExecPolicy::Parallel`] policy fans the work out over the rayon pool;
//! without it both policies run the same sequential loop. Each output entry
//! is computed by exactly the same arithmetic in both modes, so results are
//! bit-identical regardless of policy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cells per rayon task. Small grids stay sequential.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// Whether this build can actually run in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Fill `out[i] = f(i)` for every index.
    pub fn fill<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecPolicy::Parallel if out.len() >= MIN_PARALLEL_LEN => {
                out.par_iter_mut()
                    .with_min_len(MIN_PARALLEL_LEN / 4)
                    .enumerate()
                    .for_each(|(i, o)| *o = f(i));
            }
            _ => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = f(i);
                }
            }
        }
    }

    /// Map `f` over `items`, keeping order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecPolicy::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (s0 + s1) + (s2 + s3) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree_bitwise() {
        let n = 5000;
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let f = |i: usize| (i as f64 * 0.37).sin() / (1.0 + i as f64);
        ExecPolicy::Sequential.fill(&mut a, f);
        ExecPolicy::Parallel.fill(&mut b, f);
        assert_eq!(a, b);
    }

    #[test]
    fn dot_matches_naive_on_short_inputs() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let b = [0.5; 7];
        assert_eq!(dot(&a, &b), 14.0);
        assert_eq!(dot(&[], &[]), 0.0);
        assert_eq!(dot(&[3.0], &[1.0]), 3.0);
    }
}
