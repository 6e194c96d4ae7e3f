//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) `Exec::Parallel` runs on the rayon
//! pool; without it every call runs sequentially. Results are always returned
//! in input order so outputs never depend on scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map_indexed<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()
        }
        _ => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_indexed(Exec::Sequential, &items, |i, x| x * x + i as u64);
        let par = map_indexed(Exec::Parallel, &items, |i, x| x * x + i as u64);
        assert_eq!(seq, par);
        assert_eq!(seq[3], 12);
    }
}
