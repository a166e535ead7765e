//! Fixtures shared by the benchmarks.

use fmfpca_core::{replication_path, DeterministicMode, DgpConfig, FunctionalSeries};

/// A simulated sample with `phi` stochastic trends on a `p`-point grid.
pub fn sample(phi: usize, t: usize, p: usize) -> FunctionalSeries {
    let mut cfg = DgpConfig::new(phi, t).with_mode(DeterministicMode::Constant).with_seed(7);
    cfg.grid_size = p;
    replication_path(&cfg, 0).expect("valid benchmark configuration").series
}
