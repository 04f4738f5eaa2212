//! Execution policy for the data-parallel loops (cycle chunks, study repetitions).
//!
//! Without the `parallel` feature every policy runs sequentially; results are the same
//! either way because work items are indexed and collected in order.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon; `None` uses the global pool, `Some(n)` a dedicated pool of `n` threads.
    #[default]
    Parallel,
    Workers(usize),
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Execution::Parallel,
            Some(0) | Some(1) => Execution::Sequential,
            Some(n) => Execution::Workers(n),
        }
    }

    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(feature = "parallel")]
            Execution::Workers(w) => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new().num_threads(*w).build() {
                    Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                    Err(_) => (0..n).map(f).collect(),
                }
            }
            #[cfg(not(feature = "parallel"))]
            _ => (0..n).map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_every_policy() {
        let expect: Vec<usize> = (0..1000).map(|i| i * i).collect();
        for exec in [Execution::Sequential, Execution::Parallel, Execution::Workers(3)] {
            assert_eq!(exec.map_indexed(1000, |i| i * i), expect);
        }
    }
}
