//! Fully modified FPCA for cointegrated functional time series.
//!
//! Observations are curves sampled on a common [`Grid`]. The crate estimates
//! the attractor space (the span of the stochastic trends) with a corrected
//! eigenproblem, tests its dimension with KPSS-type statistics, simulates
//! the limiting null distributions, and provides the Monte Carlo design used
//! to study size and power.

pub mod cointtest;
pub mod critsim;
pub mod dgp;
pub mod error;
pub mod fmfpca;
pub mod fpca;
pub mod hilbert;
pub mod lrcov;
pub mod transforms;

pub use cointtest::{
    attractor_in_subspace_test, dimension_statistic, dimension_test, kpss_core, sequential_dimension,
    subspace_in_attractor_test, LevelDecision, SequentialResult, TestOutcome,
};
pub use critsim::{critical_values, simulate_limit_draw, CriticalValueTable, CvKey, Provenance};
pub use error::{Error, Result};
pub use fmfpca::{harris_fpca, modified_fpca, ModifiedFpcaResult};
pub use fpca::{ordinary_fpca, residualize, sample_covariance, DeterministicMode, FpcaResult, FunctionalSeries};
pub use hilbert::{
    eigendecompose, gram_matrix, gram_matrix_condition, inner_product, orthonormalize, projection_from, regularized_inverse, tensor, EigenSystem, Grid, GridFunction,
    LinearOperator,
};
pub use lrcov::{default_bandwidth, operator_lrcov, vector_lrv, BandwidthRule, KernelFamily, KernelSpec, LrcovPair};
pub use transforms::{clr_transform, inverse_clr, logit_curve, DensityFunction};
pub use dgp::{generate_path, rejection_experiment, replication_path, DgpConfig, DgpPath, ExperimentRow, TestDesign};
