//! Functional samples, deterministic-term residuals and ordinary FPCA.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    ensure_same_grid, sym_eigen_sorted, EigenSystem, Grid, GridFunction, LinearOperator,
};

/// An ordered sample `X_1, ..., X_T` of functions on one grid.
///
/// Observations are stored as columns of a `p x T` matrix of orthonormal
/// coordinates. Time indices in this API are zero based.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSeries {
    grid: Arc<Grid>,
    coords: DMatrix<f64>,
}

impl FunctionalSeries {
    pub fn new(grid: Arc<Grid>, observations: &[GridFunction]) -> Result<Self> {
        let mut coords = DMatrix::zeros(grid.len(), observations.len());
        for (t, x) in observations.iter().enumerate() {
            ensure_same_grid(&grid, x.grid())?;
            coords.set_column(t, &x.coords());
        }
        Ok(Self { grid, coords })
    }

    /// One row of grid values per time point.
    pub fn from_rows(grid: Arc<Grid>, rows: &[Vec<f64>]) -> Result<Self> {
        let obs = rows
            .iter()
            .map(|r| GridFunction::new(grid.clone(), r.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, &obs)
    }

    pub fn from_coords(grid: Arc<Grid>, coords: DMatrix<f64>) -> Result<Self> {
        if coords.nrows() != grid.len() {
            return Err(Error::DimMismatch(format!(
                "{} coordinate rows on a {}-point grid",
                coords.nrows(),
                grid.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("functional series"));
        }
        Ok(Self { grid, coords })
    }

    pub(crate) fn from_coords_unchecked(grid: Arc<Grid>, coords: DMatrix<f64>) -> Self {
        Self { grid, coords }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.coords.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.ncols() == 0
    }

    /// Grid dimension `p`.
    pub fn dim(&self) -> usize {
        self.coords.nrows()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn observation(&self, t: usize) -> GridFunction {
        GridFunction::from_coords(self.grid.clone(), self.coords.column(t).as_slice())
            .expect("series values are finite")
    }

    pub fn observations(&self) -> Vec<GridFunction> {
        (0..self.len()).map(|t| self.observation(t)).collect()
    }

    /// Grid values, one row per time point.
    pub fn value_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|t| self.grid.from_coords(self.coords.column(t).as_slice()))
            .collect()
    }

    /// Apply `op` to every observation.
    pub fn map_operator(&self, op: &LinearOperator) -> Result<Self> {
        ensure_same_grid(&self.grid, op.grid())?;
        Ok(Self::from_coords_unchecked(
            self.grid.clone(),
            op.coeffs() * &self.coords,
        ))
    }

    /// `T x k` matrix of scores `<X_t, v_j>`.
    pub fn scores(&self, directions: &[GridFunction]) -> Result<DMatrix<f64>> {
        let mut v = DMatrix::zeros(self.dim(), directions.len());
        for (j, d) in directions.iter().enumerate() {
            ensure_same_grid(&self.grid, d.grid())?;
            v.set_column(j, &d.coords());
        }
        Ok(self.coords.transpose() * v)
    }

    /// `X_{from}, ..., X_{T-1}`.
    pub fn tail(&self, from: usize) -> Self {
        Self::from_coords_unchecked(
            self.grid.clone(),
            self.coords.columns(from, self.len() - from).into_owned(),
        )
    }

    /// First differences `X_t - X_{t-1}` for `t = 1..T-1`.
    pub fn differences(&self) -> Self {
        let n = self.len();
        let d = self.coords.columns(1, n - 1) - self.coords.columns(0, n - 1);
        Self::from_coords_unchecked(self.grid.clone(), d)
    }
}

/// Deterministic component removed before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeterministicMode {
    /// No deterministic term.
    None,
    /// Intercept (demeaned residuals).
    #[serde(rename = "const")]
    Constant,
    /// Intercept and linear trend (detrended residuals).
    #[serde(rename = "trend")]
    LinearTrend,
}

impl DeterministicMode {
    pub const ALL: [DeterministicMode; 3] = [Self::None, Self::Constant, Self::LinearTrend];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Constant => "const",
            Self::LinearTrend => "trend",
        }
    }
}

impl std::fmt::Display for DeterministicMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DeterministicMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "const" | "constant" => Ok(Self::Constant),
            "trend" | "lineartrend" | "linear_trend" => Ok(Self::LinearTrend),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// Ordinary FPCA estimates of the attractor and cointegrating projections.
#[derive(Debug, Clone)]
pub struct FpcaResult {
    pub proj_n: LinearOperator,
    pub proj_s: LinearOperator,
    pub spectrum: EigenSystem,
    pub phi: usize,
}

impl FpcaResult {
    /// The first `phi` eigenvectors, as orthonormal coordinate columns.
    pub(crate) fn trend_frame(&self) -> DMatrix<f64> {
        self.spectrum.vector_coords().columns(0, self.phi).into_owned()
    }
}

/// `T^{-1} sum_t X_t ⊗ X_t`.
pub fn sample_covariance(x: &FunctionalSeries) -> LinearOperator {
    let n = x.len().max(1) as f64;
    let c = (&x.coords * x.coords.transpose()) / n;
    LinearOperator::from_coeffs_unchecked(x.grid.clone(), c)
}

/// Residuals after removing the deterministic component: the sample mean
/// (Constant) or the sample mean and the slope on `t - (T+1)/2` (LinearTrend).
pub fn residualize(x: &FunctionalSeries, mode: DeterministicMode) -> Result<FunctionalSeries> {
    let n = x.len();
    match mode {
        DeterministicMode::None => Ok(x.clone()),
        DeterministicMode::Constant => {
            if n == 0 {
                return Err(Error::TooShort { needed: 1, got: 0 });
            }
            let mean = x.coords.column_mean();
            let mut out = x.coords.clone();
            for mut col in out.column_iter_mut() {
                col -= &mean;
            }
            Ok(FunctionalSeries::from_coords_unchecked(x.grid.clone(), out))
        }
        DeterministicMode::LinearTrend => {
            if n < 3 {
                return Err(Error::TooShort { needed: 3, got: n });
            }
            let mid = (n as f64 + 1.0) / 2.0;
            let centered: Vec<f64> = (1..=n).map(|t| t as f64 - mid).collect();
            let denom: f64 = centered.iter().map(|c| c * c).sum();
            let mean = x.coords.column_mean();
            let mut slope = nalgebra::DVector::zeros(x.dim());
            for (t, c) in centered.iter().enumerate() {
                slope.axpy(*c / denom, &x.coords.column(t), 1.0);
            }
            let mut out = x.coords.clone();
            for (t, mut col) in out.column_iter_mut().enumerate() {
                col -= &mean;
                col.axpy(-centered[t], &slope, 1.0);
            }
            Ok(FunctionalSeries::from_coords_unchecked(x.grid.clone(), out))
        }
    }
}

/// Ordinary FPCA: eigendecomposition of the sample covariance of the
/// residualized sample, with `P^N` spanned by the top `phi` eigenvectors.
pub fn ordinary_fpca(x: &FunctionalSeries, phi: usize, mode: DeterministicMode) -> Result<FpcaResult> {
    let max = x.dim().min(x.len());
    if phi > max {
        return Err(Error::PhiTooLarge { phi, max });
    }
    let u = residualize(x, mode)?;
    Ok(fpca_of_residuals(&u, phi))
}

pub(crate) fn fpca_of_residuals(u: &FunctionalSeries, phi: usize) -> FpcaResult {
    let c = sample_covariance(u);
    let (values, vectors) = sym_eigen_sorted(c.coeffs().clone());
    let spectrum = EigenSystem::from_parts(u.grid.clone(), values, vectors);
    let proj_n = spectrum.leading_projection(phi);
    let proj_s = LinearOperator::identity(u.grid.clone())
        .sub(&proj_n)
        .expect("same grid");
    FpcaResult {
        proj_n,
        proj_s,
        spectrum,
        phi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn basis(grid: &Arc<Grid>, i: usize) -> GridFunction {
        let mut c = vec![0.0; grid.len()];
        c[i] = 1.0;
        GridFunction::from_coords(grid.clone(), &c).unwrap()
    }

    fn random_series(grid: &Arc<Grid>, n: usize, seed: u64) -> FunctionalSeries {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..grid.len()).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        FunctionalSeries::from_rows(grid.clone(), &rows).unwrap()
    }

    #[test]
    fn covariance_examples() {
        let g = Grid::uniform(4, 0.0, 1.0).unwrap();
        let e1 = basis(&g, 0);
        let e2 = basis(&g, 1);
        let x = FunctionalSeries::new(g.clone(), &[e1.clone(), e1.clone(), e1.clone()]).unwrap();
        let c = sample_covariance(&x);
        assert_relative_eq!(c.coeffs()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(c.coeffs().sum(), 1.0, epsilon = 1e-14);

        let x = FunctionalSeries::new(g.clone(), &[e1.clone(), e2.clone(), e1.clone(), e2.clone()]).unwrap();
        let c = sample_covariance(&x);
        assert_relative_eq!(c.coeffs()[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(c.coeffs()[(1, 1)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(c.coeffs().sum(), 1.0, epsilon = 1e-14);

        let v = GridFunction::new(g.clone(), vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let x = FunctionalSeries::new(g.clone(), &[v.clone()]).unwrap();
        let t = crate::hilbert::tensor(&v, &v).unwrap();
        assert_relative_eq!(sample_covariance(&x).coeffs(), t.coeffs(), epsilon = 1e-12);
    }

    #[test]
    fn residualize_examples() {
        let g = Grid::uniform(5, 0.0, 1.0).unwrap();
        let c = GridFunction::new(g.clone(), vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let x = FunctionalSeries::new(g.clone(), &vec![c.clone(); 6]).unwrap();
        let r = residualize(&x, DeterministicMode::Constant).unwrap();
        assert!(r.coords().amax() < 1e-12);

        let obs: Vec<_> = (1..=7).map(|t| c.scaled(t as f64)).collect();
        let x = FunctionalSeries::new(g.clone(), &obs).unwrap();
        let r = residualize(&x, DeterministicMode::LinearTrend).unwrap();
        assert!(r.coords().amax() < 1e-12);

        let x = random_series(&g, 9, 3);
        assert_eq!(residualize(&x, DeterministicMode::None).unwrap(), x);

        let short = random_series(&g, 2, 1);
        assert!(matches!(
            residualize(&short, DeterministicMode::LinearTrend),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn residual_orthogonality() {
        let g = Grid::uniform(7, 0.0, 1.0).unwrap();
        let x = random_series(&g, 25, 11);
        let r = residualize(&x, DeterministicMode::Constant).unwrap();
        assert!(r.coords().column_sum().amax() < 1e-10);

        let r = residualize(&x, DeterministicMode::LinearTrend).unwrap();
        assert!(r.coords().column_sum().amax() < 1e-10);
        let n = r.len();
        let mid = (n as f64 + 1.0) / 2.0;
        let mut weighted = nalgebra::DVector::zeros(r.dim());
        for t in 0..n {
            weighted.axpy(t as f64 + 1.0 - mid, &r.coords().column(t), 1.0);
        }
        assert!(weighted.amax() < 1e-10);
    }

    #[test]
    fn demeaned_covariance_matches_direct_formula() {
        let g = Grid::uniform(6, 0.0, 1.0).unwrap();
        let x = random_series(&g, 40, 5);
        let r = residualize(&x, DeterministicMode::Constant).unwrap();
        let c = sample_covariance(&r);
        let n = x.len() as f64;
        let mean = x.coords().column_mean();
        let direct = (x.coords() * x.coords().transpose()) / n - &mean * mean.transpose();
        assert_relative_eq!(c.coeffs(), &direct, epsilon = 1e-12);
    }

    #[test]
    fn ordinary_fpca_examples() {
        let g = Grid::uniform(4, 0.0, 1.0).unwrap();
        let x = random_series(&g, 10, 2);
        let r = ordinary_fpca(&x, 0, DeterministicMode::None).unwrap();
        assert_eq!(r.proj_n.max_abs(), 0.0);
        assert_relative_eq!(r.proj_s.coeffs(), &DMatrix::identity(4, 4));

        let e1 = basis(&g, 0);
        let x = FunctionalSeries::new(g.clone(), &[e1.clone(), e1.scaled(2.0)]).unwrap();
        let r = ordinary_fpca(&x, 1, DeterministicMode::None).unwrap();
        let expect = crate::hilbert::tensor(&e1, &e1).unwrap();
        assert_relative_eq!(r.proj_n.coeffs(), expect.coeffs(), epsilon = 1e-12);

        let x = random_series(&g, 10, 7);
        let r = ordinary_fpca(&x, 2, DeterministicMode::Constant).unwrap();
        let sum = r.proj_n.add(&r.proj_s).unwrap();
        assert_relative_eq!(sum.coeffs(), &DMatrix::identity(4, 4), epsilon = 1e-10);
        assert!(r.spectrum.eigenvalues().windows(2).all(|w| w[0] >= w[1]));

        assert!(matches!(
            ordinary_fpca(&x, 5, DeterministicMode::None),
            Err(Error::PhiTooLarge { .. })
        ));
    }

    #[test]
    fn projection_is_sign_invariant() {
        let g = Grid::uniform(5, 0.0, 1.0).unwrap();
        let x = random_series(&g, 30, 9);
        let r = ordinary_fpca(&x, 2, DeterministicMode::None).unwrap();
        let mut flipped = r.spectrum.vector_coords().columns(0, 2).into_owned();
        flipped.column_mut(0).neg_mut();
        let p = &flipped * flipped.transpose();
        assert_relative_eq!(r.proj_n.coeffs(), &p, epsilon = 1e-12);
    }
}
