//! Execution backend for embarrassingly parallel work.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] fans out
//! over rayon's pool; without it every request runs sequentially. Results
//! are always returned in index order, so outputs do not depend on the
//! backend.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_indexed`] for fallible jobs; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(exec, n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree_in_order() {
        let seq = map_indexed(Execution::Sequential, 100, |i| i * i);
        let par = map_indexed(Execution::Parallel, 100, |i| i * i);
        assert_eq!(seq, par);
    }
}
