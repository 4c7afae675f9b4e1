//! Thread-pool setup and parallel tree fitting.

use fair4free_core::eval::{Forest, ForestTrainer};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "FAIR4FREE_THREADS";

/// Caps the global pool at `FAIR4FREE_THREADS` when it is set to a positive
/// integer. Later calls have no effect.
pub fn init_thread_pool() {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Fits trees concurrently; the forest equals the sequential
/// [`ForestTrainer::fit`] result.
pub fn fit_forest_parallel(trainer: &ForestTrainer) -> Forest {
    let trees = (0..trainer.config().n_trees).into_par_iter().map(|i| trainer.fit_tree(i)).collect();
    Forest::from_trees(trees, trainer.n_features(), *trainer.config())
}
