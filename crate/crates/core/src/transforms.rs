//! Observation-space maps for bounded and density-valued curves.
//!
//! Rates in `(0, 1)` go through the logit. Densities go through the centered
//! log-ratio `ψ(X) = log X - |S|^{-1} ∫ log X`, whose inverse is
//! `exp(f) / ∫ exp(f)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hilbert::{Grid, GridFunction};

/// Density values below this are rejected, never clipped.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Allowed deviation of `∫ X` from one.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Allowed quadrature mean of an inverse-clr input before it counts as uncentered.
pub const CENTERING_TOL: f64 = 1e-6;
/// Largest `max f - min f` accepted by [`inverse_clr`].
pub const MAX_LOG_RANGE: f64 = 700.0;

/// A probability density sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFunction {
    inner: GridFunction,
}

impl DensityFunction {
    /// Values must be at least [`DENSITY_FLOOR`] and integrate to one.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let f = GridFunction::new(grid, values)?;
        check_floor(&f)?;
        let mass = f.grid().integrate(f.values());
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(mass));
        }
        Ok(Self { inner: f })
    }

    /// Rescale positive values to unit mass.
    pub fn normalized(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let f = GridFunction::new(grid, values)?;
        check_floor(&f)?;
        let mass = f.grid().integrate(f.values());
        let scaled = f.scaled(1.0 / mass);
        check_floor(&scaled)?;
        Ok(Self { inner: scaled })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.inner.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.inner.values()
    }

    pub fn as_function(&self) -> &GridFunction {
        &self.inner
    }
}

fn check_floor(f: &GridFunction) -> Result<()> {
    let bad: Vec<usize> = f
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| !(**v >= DENSITY_FLOOR))
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::NonPositiveDensity(bad))
    }
}

/// Pointwise `log(v / (1 - v))`.
pub fn logit_curve(f: &GridFunction) -> Result<GridFunction> {
    let bad: Vec<usize> = f
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| !(**v > 0.0 && **v < 1.0))
        .map(|(i, _)| i)
        .collect();
    if !bad.is_empty() {
        return Err(Error::OutOfDomain(bad));
    }
    let values = f.values().iter().map(|v| (v / (1.0 - v)).ln()).collect();
    GridFunction::new(f.grid().clone(), values)
}

fn quadrature_mean(f: &GridFunction) -> f64 {
    f.grid().integrate(f.values()) / f.grid().domain_length()
}

fn centered(grid: Arc<Grid>, mut values: Vec<f64>) -> Result<GridFunction> {
    let mean = grid.integrate(&values) / grid.domain_length();
    values.iter_mut().for_each(|v| *v -= mean);
    GridFunction::new(grid, values)
}

/// Centered log-ratio `ψ(X)`; the result has quadrature mean zero.
pub fn clr_transform(x: &DensityFunction) -> Result<GridFunction> {
    check_floor(&x.inner)?;
    let logs = x.values().iter().map(|v| v.ln()).collect();
    centered(x.grid().clone(), logs)
}

/// `ψ^{-1}(f) = exp(f) / ∫ exp(f)`. Inputs within [`CENTERING_TOL`] of mean
/// zero are re-centered first.
pub fn inverse_clr(f: &GridFunction) -> Result<DensityFunction> {
    let mean = quadrature_mean(f);
    if !(mean.abs() <= CENTERING_TOL) {
        return Err(Error::NotCentered(mean));
    }
    let f = centered(f.grid().clone(), f.values().to_vec())?;
    let (lo, hi) = f
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo > MAX_LOG_RANGE {
        return Err(Error::Overflow(hi - lo));
    }
    // shifting by the max keeps every exponent ≤ 0
    let shifted: Vec<f64> = f.values().iter().map(|v| (v - hi).exp()).collect();
    DensityFunction::normalized(f.grid().clone(), shifted)
}
