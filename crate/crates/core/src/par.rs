//! Index-parallel map helpers.
//!
//! Every helper returns results in index order, so reductions downstream are
//! independent of how the work was scheduled. With the `parallel` feature off
//! the same code runs on plain iterators.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

pub(crate) fn try_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let out = try_map(1000, |i| Ok(i * 2)).unwrap();
        assert!(out.iter().enumerate().all(|(i, v)| *v == 2 * i));
    }

    #[test]
    fn try_map_surfaces_errors() {
        let out: Result<Vec<usize>> = try_map(10, |i| {
            if i == 7 {
                Err(crate::EffectError::Oracle("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(out.is_err());
    }
}
