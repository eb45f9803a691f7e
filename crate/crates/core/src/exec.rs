//! Execution strategy for the data-parallel hot loops (per-pixel error
//! evaluation, rendering, Monte Carlo sweeps).
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it, or with [`Exec::Sequential`], the same closures run in order.
//! Both paths produce identical results because every work item is
//! independent and results are collected in index order.

/// How to run an indexed map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

impl Exec {
    /// `(0..n).map(f).collect()` under this strategy.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
        }
    }

    /// Fills `out` in chunks of `chunk` items; `f(chunk_index, chunk_slice)`.
    pub fn for_each_chunk_mut<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        match self {
            Exec::Sequential => out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c))
            }
        }
    }
}

/// Configures the global rayon pool size. A no-op without the `parallel` feature.
pub fn set_thread_count(n: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let seq = Exec::Sequential.map_range(1000, |i| (i * i) % 7);
        let def = Exec::default().map_range(1000, |i| (i * i) % 7);
        assert_eq!(seq, def);

        let mut a = vec![0usize; 103];
        let mut b = vec![0usize; 103];
        Exec::Sequential
            .for_each_chunk_mut(&mut a, 10, |ci, c| c.iter_mut().enumerate().for_each(|(k, v)| *v = ci * 10 + k));
        Exec::default()
            .for_each_chunk_mut(&mut b, 10, |ci, c| c.iter_mut().enumerate().for_each(|(k, v)| *v = ci * 10 + k));
        assert_eq!(a, b);
        assert_eq!(a[102], 102);
    }
}
