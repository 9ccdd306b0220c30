// Order-preserving map over an index range. Parallel under `std`.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().with_min_len(64).map(f).collect()
}

#[cfg(not(feature = "std"))]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}
