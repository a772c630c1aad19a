//! Data-parallel map over independent work items.
//!
//! With the default `parallel` feature the map runs on the rayon pool;
//! without it the same call is a plain sequential iterator. Output order
//! matches input order either way, so results are identical across both
//! builds and any thread count.

#[cfg(feature = "parallel")]
pub fn map_items<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_items<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}
