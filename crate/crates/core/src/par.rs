//! Index-parallel map helpers.
//!
//! Every Monte Carlo loop in the crate (probes, paths, directions, grid
//! nodes, Hessian columns) goes through these functions. Results are always
//! collected in index order, and callers reduce them sequentially, so the
//! output does not depend on the number of worker threads.
//!
//! With the `parallel` feature (default) the work is spread over the rayon
//! global pool; without it the same closures run on the calling thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Fallible variant of [`map_indexed`]; the first error by index wins.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}

/// Sequential reference path, always compiled.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Index-ordered sum.
pub fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc + v)
}

/// Sample mean and standard error of the mean (zero for a single sample).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = ordered_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = values.iter().fold(0.0, |acc, v| acc + (v - mean) * (v - mean));
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Generator for item `index` of a seeded loop: one ChaCha stream per item,
/// so items can be drawn in any order or on any thread.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v = map_indexed(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, x)| *x == 2 * i));
    }

    #[test]
    fn first_error_by_index() {
        let r: Result<Vec<usize>, usize> =
            try_map_indexed(100, |i| if i % 7 == 3 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(3));
    }

    #[test]
    fn std_error_of_constant_is_zero() {
        let (m, se) = mean_and_std_error(&[4.0; 10]);
        assert_eq!(m, 4.0);
        assert_eq!(se, 0.0);
    }
}
