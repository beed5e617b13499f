//! Index-parallel map with a sequential fallback, plus the counter-based
//! RNG substreams that keep results independent of the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for substream `stream` of `master`.
pub fn substream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// `(0..n).map(f)` in index order. `workers == 0` uses every core,
/// `workers == 1` stays on the calling thread.
pub fn map_indices<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers != 1 {
        use rayon::prelude::*;
        let run = || (0..n).into_par_iter().map(&f).collect();
        return match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        };
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indices`]; returns the lowest-index error.
pub fn try_map_indices<T, E, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indices(n, workers, f).into_iter().collect()
}
