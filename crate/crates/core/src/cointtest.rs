//! KPSS-type tests for the dimension of the attractor space.
//!
//! For a hypothesized dimension `φ0` the series is passed through the
//! modified FPCA at `φ0`, projected on the corrected eigenvectors
//! `w_{φ0+1}, …, w_K`, and the resulting vector series is tested for
//! stationarity with
//!
//! ```text
//! Q = n^{-2} Σ_t S_t' LRV^{-1} S_t,   S_t = Σ_{s≤t} z_s.
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::critsim::{CriticalValueTable, CvKey};
use crate::error::{Error, Result};
use crate::fpca::{DeterministicMode, FunctionalSeries};
use crate::hilbert::{projection_from, Grid, GridFunction, LinearOperator, TOL_RANK};
use crate::lrcov::{vector_lrv, KernelSpec};
use crate::fmfpca::modified_fpca;

/// Critical value and decision at one quantile level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDecision {
    /// Quantile level, e.g. 0.95 for a 5% test.
    pub level: f64,
    pub critical_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub k: usize,
    pub phi0: usize,
    pub mode: DeterministicMode,
    /// One entry per level stored in the table for this key, ascending.
    pub decisions: Vec<LevelDecision>,
    /// `z_{φ0,t}`, `(T-1) × (K-φ0)`.
    #[serde(skip)]
    pub projected_series: DMatrix<f64>,
}

impl TestOutcome {
    pub fn decision_at(&self, level: f64) -> Option<&LevelDecision> {
        self.decisions.iter().find(|d| (d.level - level).abs() < 1e-9)
    }

    /// Whether the test rejects at significance `alpha`.
    pub fn rejects(&self, alpha: f64) -> Result<bool> {
        self.decision_at(1.0 - alpha)
            .map(|d| d.reject)
            .ok_or_else(|| Error::MissingCriticalValues {
                mode: self.mode.to_string(),
                dim_w: self.k - self.phi0,
                dim_b: self.phi0,
                level: 1.0 - alpha,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialResult {
    pub phi_hat: usize,
    pub trajectory: Vec<TestOutcome>,
    pub alpha: f64,
    /// Every test up to the cap rejected.
    pub cap_reached: bool,
}

/// `n^{-2} Σ_t S_t' LRV^{-1} S_t` for an `n × K` series. `z` is not demeaned.
pub fn kpss_core(z: &DMatrix<f64>, spec: &KernelSpec, h: f64) -> Result<f64> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if z.ncols() == 0 {
        return Err(Error::DimMismatch("projected series has no columns".into()));
    }
    let lrv = vector_lrv(z, spec, h)?;
    let eig = lrv.clone().symmetric_eigen();
    let largest = eig.eigenvalues.max();
    let smallest = eig.eigenvalues.min();
    if !(largest > 0.0) || !(smallest > TOL_RANK * largest) {
        return Err(Error::SingularLrv);
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let lrv_inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();

    let mut partial = nalgebra::DVector::zeros(z.ncols());
    let mut total = 0.0;
    for t in 0..n {
        partial += z.row(t).transpose();
        total += (partial.transpose() * &lrv_inv * &partial)[(0, 0)];
    }
    Ok(total / (n as f64 * n as f64))
}

fn lookup_decisions(
    statistic: f64,
    key: CvKey,
    cvt: &CriticalValueTable,
) -> Result<Vec<LevelDecision>> {
    let entries = cvt.entries(&key);
    if entries.is_empty() {
        return Err(Error::MissingCriticalValues {
            mode: key.mode.to_string(),
            dim_w: key.dim_w,
            dim_b: key.dim_b,
            level: f64::NAN,
        });
    }
    Ok(entries
        .iter()
        .map(|e| LevelDecision {
            level: e.level,
            critical_value: e.quantile,
            reject: statistic > e.quantile,
        })
        .collect())
}

/// The statistic `Q(K, φ0)` and the projected series it was computed from.
pub fn dimension_statistic(
    x: &FunctionalSeries,
    phi0: usize,
    k: usize,
    spec: &KernelSpec,
    h: f64,
    mode: DeterministicMode,
) -> Result<(f64, DMatrix<f64>)> {
    let p = x.dim();
    if !(phi0 < k && k <= p) {
        return Err(Error::KOutOfRange { k, phi0, max: p });
    }
    let fit = modified_fpca(x, phi0, spec, h, mode)?;
    let w = fit.spectrum.vector_coords().columns(phi0, k - phi0);
    // rows are t = 2..T
    let z = fit.modified_series.coords().transpose() * w;
    let stat = kpss_core(&z, spec, h)?;
    Ok((stat, z))
}

/// Test `dim(H^N) = φ0` against `dim(H^N) > φ0` using directions `φ0+1..=K`.
pub fn dimension_test(
    x: &FunctionalSeries,
    phi0: usize,
    k: usize,
    spec: &KernelSpec,
    h: f64,
    mode: DeterministicMode,
    cvt: &CriticalValueTable,
) -> Result<TestOutcome> {
    if !(phi0 < k && k <= x.dim()) {
        return Err(Error::KOutOfRange { k, phi0, max: x.dim() });
    }
    let key = CvKey { mode, dim_w: k - phi0, dim_b: phi0 };
    if !cvt.contains(&key) {
        // fail before the expensive part
        lookup_decisions(0.0, key, cvt)?;
    }
    let (statistic, z) = dimension_statistic(x, phi0, k, spec, h, mode)?;
    let decisions = lookup_decisions(statistic, key, cvt)?;
    Ok(TestOutcome { statistic, k, phi0, mode, decisions, projected_series: z })
}

/// Default upper bound of the sequential search, `min(p - 1, T / 10)`.
pub fn default_phi_cap(p: usize, t: usize) -> usize {
    p.saturating_sub(1).min(t / 10)
}

/// Test `φ0 = 0, 1, …` with `K = φ0 + k_policy` until the first non-rejection.
#[allow(clippy::too_many_arguments)]
pub fn sequential_dimension(
    x: &FunctionalSeries,
    alpha: f64,
    k_policy: usize,
    spec: &KernelSpec,
    h: f64,
    mode: DeterministicMode,
    cvt: &CriticalValueTable,
    phi_cap: Option<usize>,
) -> Result<SequentialResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if k_policy == 0 {
        return Err(Error::InvalidConfig("K policy must be at least 1".into()));
    }
    let p = x.dim();
    let max_cap = p.saturating_sub(k_policy);
    let cap = phi_cap.unwrap_or_else(|| default_phi_cap(p, x.len()).min(max_cap));
    if cap > max_cap {
        return Err(Error::InvalidConfig(format!(
            "phi cap {cap} exceeds p - K policy = {max_cap}"
        )));
    }
    let mut trajectory = Vec::new();
    for phi0 in 0..=cap {
        let outcome = dimension_test(x, phi0, phi0 + k_policy, spec, h, mode, cvt)?;
        let reject = outcome.rejects(alpha)?;
        trajectory.push(outcome);
        if !reject {
            return Ok(SequentialResult { phi_hat: phi0, trajectory, alpha, cap_reached: false });
        }
    }
    Ok(SequentialResult { phi_hat: cap, trajectory, alpha, cap_reached: true })
}

fn residual_series(x: &FunctionalSeries, m: &[GridFunction]) -> Result<(FunctionalSeries, Arc<Grid>)> {
    let grid = x.grid().clone();
    let pm = projection_from(&grid, m)?;
    let complement = LinearOperator::identity(grid.clone()).sub(&pm)?;
    Ok((x.map_operator(&complement)?, grid))
}

/// `H0: span(M) ⊂ H^N` given `dim(H^N) = phi`: the dimension test at
/// `φ0 = phi - dim(M)` on `(I - P^M) X_t`.
#[allow(clippy::too_many_arguments)]
pub fn subspace_in_attractor_test(
    x: &FunctionalSeries,
    m: &[GridFunction],
    phi: usize,
    k: usize,
    spec: &KernelSpec,
    h: f64,
    mode: DeterministicMode,
    cvt: &CriticalValueTable,
) -> Result<TestOutcome> {
    if m.len() > phi {
        return Err(Error::DimMismatch(format!(
            "subspace has dimension {} but phi is {phi}",
            m.len()
        )));
    }
    let (resid, _) = residual_series(x, m)?;
    dimension_test(&resid, phi - m.len(), k, spec, h, mode, cvt)
}

/// `H0: H^N ⊂ span(M)`: the residual `(I - P^M) X_t` is stationary, tested at `φ0 = 0`.
pub fn attractor_in_subspace_test(
    x: &FunctionalSeries,
    m: &[GridFunction],
    k: usize,
    spec: &KernelSpec,
    h: f64,
    mode: DeterministicMode,
    cvt: &CriticalValueTable,
) -> Result<TestOutcome> {
    if m.is_empty() {
        return Err(Error::EmptySubspace);
    }
    let (resid, _) = residual_series(x, m)?;
    dimension_test(&resid, 0, k, spec, h, mode, cvt)
}
