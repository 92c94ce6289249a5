//! Experiments on random walks in random environments: range dimension,
//! hitting of thin sets, and statistical checks of the walk's estimates.

pub mod checkpoint;
pub mod checks;
pub mod config;
pub mod dimension;
pub mod hitting;
pub mod output;
pub mod testset;

pub use checks::CheckReport;
pub use config::ExperimentConfig;
pub use dimension::{run_dimension, DimensionReport, ReplicaDimension};
pub use hitting::{run_hitting, simulate_hits, HittingReport};
pub use testset::{make_test_set, TestSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("the range of the walk is all of Z^{0}; experiments need d >= 3")]
    RecurrentDimension(usize),
    #[error("replica {replica}: only {nonempty} shells contain range points, need at least 4")]
    InsufficientShells { replica: usize, nonempty: usize },
    #[error("beta must lie in (0, d] (got beta = {beta}, d = {dim})")]
    BadBeta { beta: f64, dim: usize },
}

/// Stream tags. Each tag owns a disjoint family of ChaCha streams, so
/// replica `r` of one kind of randomness never overlaps another kind.
pub const STREAM_WALK: u64 = 1;
pub const STREAM_ENV: u64 = 2;
pub const STREAM_CHECK: u64 = 3;
pub const STREAM_SET: u64 = 4;

/// Generator for replica `index` of stream family `stream`.
pub fn stream_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((stream << 48) | index);
    rng
}

/// A 64-bit seed for replica `index` of stream family `stream`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    stream_rng(master, stream, index).next_u64()
}

/// Run `f` on a rayon pool of `threads` threads (0 means rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}
