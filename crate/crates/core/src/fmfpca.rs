//! Fully modified FPCA.
//!
//! Starting from the ordinary FPCA projections `P^N`, `P^S`, the pipeline
//! builds `Z_t = P^N ΔX_t + P^S X_t`, estimates its long-run covariances,
//! removes the endogeneity term from the sample
//!
//! ```text
//! X_{φ,t} = X_t - Ω^{SN} (Ω^{NN}|_φ^†) P^N ΔX_t
//! ```
//!
//! and solves the eigenproblem of `C_φ - Υ - Υ*` with the serial-correlation
//! correction `Υ = Γ^{NS} - Γ^{NN} (Ω^{NN}|_φ^†) Ω^{NS}`. Blocks are always
//! taken with the *estimated* projections, `A^{ij} = P^i A P^j`.
//!
//! `ΔX_1` is not observed, so `Z` and the modified sample are indexed
//! `t = 2..T` and every downstream average uses `T - 1` as its normalizer.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fpca::{fpca_of_residuals, residualize, sample_covariance, DeterministicMode, FpcaResult, FunctionalSeries};
use crate::hilbert::{
    ensure_same_grid, inverse_on_frame, sym_eigen_sorted, EigenSystem, LinearOperator, TOL_RANK,
};
use crate::lrcov::{operator_lrcov, KernelSpec, LrcovPair};

/// Output of the modified (or Harris-type) eigenproblem.
#[derive(Debug, Clone)]
pub struct ModifiedFpcaResult {
    /// `Π^N`, projection onto the top `phi` corrected eigenvectors.
    pub proj_n: LinearOperator,
    pub proj_s: LinearOperator,
    /// `{μ_j, w_j}` of the corrected operator.
    pub spectrum: EigenSystem,
    /// `X_{φ,t}` for `t = 2..T`.
    pub modified_series: FunctionalSeries,
    pub upsilon: LinearOperator,
    pub lrcov: LrcovPair,
    pub phi: usize,
    /// The ordinary FPCA step the correction was built on.
    pub preliminary: FpcaResult,
    /// Largest entry of `A - A*` for the corrected operator before it was symmetrized.
    pub asymmetry: f64,
}

/// `Z_t = P^N ΔX_t + P^S X_t` for `t = 2..T`.
pub fn build_z(x: &FunctionalSeries, fp: &FpcaResult) -> Result<FunctionalSeries> {
    ensure_same_grid(x.grid(), fp.proj_n.grid())?;
    if x.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: x.len() });
    }
    let diffs = x.differences();
    let levels = x.tail(1);
    let z = fp.proj_n.coeffs() * diffs.coords() + fp.proj_s.coeffs() * levels.coords();
    FunctionalSeries::from_coords(x.grid().clone(), z)
}

/// The φ-regularized inverse of `Ω^{NN}` in the frame `V` of the top `phi`
/// preliminary eigenvectors: returns `A^{-1}` with `A = V' Ω V`, so that
/// `Ω^{NN}|_φ^† = V A^{-1} V'`.
fn omega_nn_inverse(frame: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = frame.transpose() * omega * frame;
    inverse_on_frame(&a, 0.0)
}

fn is_full_rank_split(fp: &FpcaResult) -> bool {
    fp.phi == fp.proj_n.dim()
}

/// Coefficients of `Ω^{SN} (Ω^{NN}|_φ^†) P^N`, the operator applied to `ΔX_t`.
fn endogeneity_correction(fp: &FpcaResult, lr: &LrcovPair) -> Result<DMatrix<f64>> {
    let p = fp.proj_n.dim();
    if fp.phi == 0 || is_full_rank_split(fp) {
        return Ok(DMatrix::zeros(p, p));
    }
    let v = fp.trend_frame();
    let a_inv = omega_nn_inverse(&v, lr.omega.coeffs())?;
    // P^S Ω P^N V A^{-1} V' P^N = P^S Ω V A^{-1} V'
    let omega_v = lr.omega.coeffs() * &v;
    let s_omega_v = fp.proj_s.coeffs() * omega_v;
    Ok(s_omega_v * a_inv * v.transpose())
}

/// `X_{φ,t} = X_t - Ω^{SN} (Ω^{NN}|_φ^†) P^N ΔX_t` for `t = 2..T`.
pub fn modified_series(x: &FunctionalSeries, fp: &FpcaResult, lr: &LrcovPair) -> Result<FunctionalSeries> {
    ensure_same_grid(x.grid(), fp.proj_n.grid())?;
    ensure_same_grid(x.grid(), lr.omega.grid())?;
    if x.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: x.len() });
    }
    let correction = endogeneity_correction(fp, lr)?;
    let out = x.tail(1).coords() - correction * x.differences().coords();
    FunctionalSeries::from_coords(x.grid().clone(), out)
}

/// `Υ = Γ^{NS} - Γ^{NN} (Ω^{NN}|_φ^†) Ω^{NS}`.
pub fn upsilon(fp: &FpcaResult, lr: &LrcovPair) -> Result<LinearOperator> {
    ensure_same_grid(fp.proj_n.grid(), lr.gamma.grid())?;
    let grid = fp.proj_n.grid().clone();
    if fp.phi == 0 || is_full_rank_split(fp) {
        return Ok(LinearOperator::zero(grid));
    }
    let pn = fp.proj_n.coeffs();
    let ps = fp.proj_s.coeffs();
    let gamma = lr.gamma.coeffs();
    let omega = lr.omega.coeffs();
    let v = fp.trend_frame();
    let a_inv = omega_nn_inverse(&v, omega)?;
    let regularized = &v * a_inv * v.transpose();

    let gamma_ns = pn * gamma * ps;
    let gamma_nn = pn * gamma * pn;
    let omega_ns = pn * omega * ps;
    let ups = gamma_ns - gamma_nn * regularized * omega_ns;
    LinearOperator::from_coeffs(grid, ups)
}

fn check_pipeline_inputs(x: &FunctionalSeries, phi: usize) -> Result<()> {
    if x.len() < 4 {
        return Err(Error::TooShort { needed: 4, got: x.len() });
    }
    let max = x.dim().min(x.len() - 1);
    if phi > max {
        return Err(Error::PhiTooLarge { phi, max });
    }
    Ok(())
}

fn split_spectrum(
    grid: &std::sync::Arc<crate::hilbert::Grid>,
    op: DMatrix<f64>,
    phi: usize,
) -> (EigenSystem, LinearOperator, LinearOperator) {
    let (values, vectors) = sym_eigen_sorted(op);
    let spectrum = EigenSystem::from_parts(grid.clone(), values, vectors);
    let proj_n = spectrum.leading_projection(phi);
    let proj_s = LinearOperator::identity(grid.clone())
        .sub(&proj_n)
        .expect("same grid");
    (spectrum, proj_n, proj_s)
}

/// The full modified FPCA pipeline for a hypothesized attractor dimension `phi`.
pub fn modified_fpca(
    x: &FunctionalSeries,
    phi: usize,
    spec: &KernelSpec,
    h: f64,
    mode: DeterministicMode,
) -> Result<ModifiedFpcaResult> {
    check_pipeline_inputs(x, phi)?;
    let u = residualize(x, mode)?;
    let fp = fpca_of_residuals(&u, phi);
    let z = build_z(&u, &fp)?;
    let lr = operator_lrcov(&z, spec, h)?;
    let xm = modified_series(&u, &fp, &lr)?;
    let ups = upsilon(&fp, &lr)?;

    let c = sample_covariance(&xm);
    let corrected = c.coeffs() - ups.coeffs() - ups.coeffs().transpose();
    let corrected = LinearOperator::from_coeffs(x.grid().clone(), corrected)?;
    let asymmetry = corrected.asymmetry();
    let (spectrum, proj_n, proj_s) = split_spectrum(x.grid(), corrected.symmetrized().coeffs().clone(), phi);

    Ok(ModifiedFpcaResult {
        proj_n,
        proj_s,
        spectrum,
        modified_series: xm,
        upsilon: ups,
        lrcov: lr,
        phi,
        preliminary: fp,
        asymmetry,
    })
}

/// Finite-dimensional variant: the sample is additionally purged of
/// `Γ^{SN} C_Z^{-1} Z_t` and the eigenproblem is solved on its plain sample
/// covariance, with no `Υ` term. Needs `C_Z` to be well conditioned, which
/// fails whenever the data do not span the whole grid space.
pub fn harris_fpca(
    x: &FunctionalSeries,
    phi: usize,
    spec: &KernelSpec,
    h: f64,
    mode: DeterministicMode,
) -> Result<ModifiedFpcaResult> {
    if phi == 0 {
        return Err(Error::InvalidConfig("harris_fpca needs phi >= 1".into()));
    }
    check_pipeline_inputs(x, phi)?;
    let u = residualize(x, mode)?;
    let fp = fpca_of_residuals(&u, phi);
    let z = build_z(&u, &fp)?;
    let lr = operator_lrcov(&z, spec, h)?;

    let cz = sample_covariance(&z);
    let (cz_values, cz_vectors) = sym_eigen_sorted(cz.coeffs().clone());
    let largest = cz_values[0];
    let smallest = *cz_values.last().expect("nonempty spectrum");
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if !(ratio > TOL_RANK) {
        return Err(Error::IllConditioned { ratio });
    }
    let inv_diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        cz_values.len(),
        cz_values.iter().map(|v| 1.0 / v),
    ));
    let cz_inv = &cz_vectors * inv_diag * cz_vectors.transpose();

    let endo = endogeneity_correction(&fp, &lr)?;
    let gamma_sn = fp.proj_s.coeffs() * lr.gamma.coeffs() * fp.proj_n.coeffs();
    let serial = gamma_sn * cz_inv;
    let xdd = u.tail(1).coords() - endo * u.differences().coords() - serial * z.coords();
    let xdd = FunctionalSeries::from_coords(x.grid().clone(), xdd)?;

    let c = sample_covariance(&xdd);
    let asymmetry = c.asymmetry();
    let (spectrum, proj_n, proj_s) = split_spectrum(x.grid(), c.symmetrized().coeffs().clone(), phi);
    Ok(ModifiedFpcaResult {
        proj_n,
        proj_s,
        spectrum,
        modified_series: xdd,
        upsilon: LinearOperator::zero(x.grid().clone()),
        lrcov: lr,
        phi,
        preliminary: fp,
        asymmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpca::ordinary_fpca;
    use crate::hilbert::Grid;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    /// Grid with unit weights: coordinates equal values.
    fn unit_weight_grid(p: usize) -> Arc<Grid> {
        Grid::with_weights((0..p).map(|i| i as f64).collect(), vec![1.0; p]).unwrap()
    }

    /// Two-dimensional series with a dominant random walk in e1 and a
    /// stationary e2 component correlated with the walk's increments.
    fn two_dim_series(n: usize, seed: u64) -> FunctionalSeries {
        let g = unit_weight_grid(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut walk = 0.0;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let e: f64 = rng.sample(rand_distr::StandardNormal);
                let s: f64 = rng.sample(rand_distr::StandardNormal);
                walk += e;
                vec![walk, 0.6 * e + 0.8 * s]
            })
            .collect();
        FunctionalSeries::from_rows(g, &rows).unwrap()
    }

    fn random_series(p: usize, n: usize, seed: u64) -> FunctionalSeries {
        let g = Grid::uniform(p, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = vec![0.0; p];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                level[0] += rng.sample::<f64, _>(rand_distr::StandardNormal);
                (0..p)
                    .map(|i| level[i] + rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        FunctionalSeries::from_rows(g, &rows).unwrap()
    }

    #[test]
    fn z_with_phi_zero_is_levels() {
        let x = random_series(6, 20, 1);
        let fp = ordinary_fpca(&x, 0, DeterministicMode::None).unwrap();
        let z = build_z(&x, &fp).unwrap();
        assert_eq!(z.len(), 19);
        assert_relative_eq!(z.coords(), x.tail(1).coords(), epsilon = 1e-14);
    }

    #[test]
    fn z_with_full_projection_is_differences() {
        let x = random_series(4, 20, 2);
        let fp = ordinary_fpca(&x, 4, DeterministicMode::None).unwrap();
        let z = build_z(&x, &fp).unwrap();
        assert_relative_eq!(z.coords(), x.differences().coords(), epsilon = 1e-12);
    }

    #[test]
    fn z_componentwise_on_two_dim_series() {
        let x = two_dim_series(200, 3);
        let fp = ordinary_fpca(&x, 1, DeterministicMode::None).unwrap();
        // the walk dominates, so the leading eigenvector is close to e1
        let v = fp.spectrum.vector_coords().column(0);
        assert!(v[0].abs() > 0.99);
        let z = build_z(&x, &fp).unwrap();
        let pn = fp.proj_n.coeffs();
        let ps = fp.proj_s.coeffs();
        for t in 1..x.len() {
            let dx = x.coords().column(t) - x.coords().column(t - 1);
            let expect = pn * dx + ps * x.coords().column(t);
            assert_relative_eq!(z.coords().column(t - 1).into_owned(), expect, epsilon = 1e-12);
        }
    }

    /// FpcaResult with `P^N = e1 ⊗ e1` on a two-point unit-weight grid, plus a
    /// hand-specified long-run covariance pair.
    fn hand_setup(omega: [f64; 4], gamma: [f64; 4]) -> (FunctionalSeries, FpcaResult, LrcovPair) {
        let g = unit_weight_grid(2);
        let rows = vec![vec![0.0, 0.3], vec![5.0, -0.2], vec![12.0, 0.1], vec![20.0, 0.0]];
        let x = FunctionalSeries::from_rows(g.clone(), &rows).unwrap();
        let fp = ordinary_fpca(&x, 1, DeterministicMode::None).unwrap();
        let mut e1 = fp.spectrum.vector_coords().columns(0, 1).into_owned();
        // force an exact e1 frame so the scalar oracle applies exactly
        e1[(0, 0)] = 1.0;
        e1[(1, 0)] = 0.0;
        let spectrum = EigenSystem::from_parts(g.clone(), vec![1.0, 0.0], DMatrix::identity(2, 2));
        let proj_n = LinearOperator::from_coeffs(g.clone(), &e1 * e1.transpose()).unwrap();
        let proj_s = LinearOperator::identity(g.clone()).sub(&proj_n).unwrap();
        let fp = FpcaResult { proj_n, proj_s, spectrum, phi: 1 };
        let op = |m: [f64; 4]| LinearOperator::from_coeffs(g.clone(), DMatrix::from_row_slice(2, 2, &m)).unwrap();
        let lr = LrcovPair {
            omega: op(omega),
            gamma: op(gamma),
            lambda0: op([0.0; 4]),
            bandwidth: 1.0,
        };
        (x, fp, lr)
    }

    #[test]
    fn modified_series_scalar_oracle() {
        // coefficient (i, j) maps component j to component i, so Ω^{SN} = Ω[1][0]
        let (x, fp, lr) = hand_setup([2.0, 0.7, 0.7, 1.5], [1.0, 0.2, 0.4, 0.9]);
        let xm = modified_series(&x, &fp, &lr).unwrap();
        let ratio = 0.7 / 2.0;
        for t in 1..x.len() {
            let d1 = x.coords()[(0, t)] - x.coords()[(0, t - 1)];
            assert_relative_eq!(xm.coords()[(0, t - 1)], x.coords()[(0, t)], epsilon = 1e-14);
            assert_relative_eq!(xm.coords()[(1, t - 1)], x.coords()[(1, t)] - ratio * d1, epsilon = 1e-14);
        }
    }

    #[test]
    fn modified_series_without_cross_covariance_is_identity() {
        let (x, fp, lr) = hand_setup([2.0, 0.0, 0.0, 1.5], [1.0, 0.3, 0.0, 0.9]);
        let xm = modified_series(&x, &fp, &lr).unwrap();
        assert_relative_eq!(xm.coords(), x.tail(1).coords(), epsilon = 1e-15);
    }

    #[test]
    fn upsilon_scalar_oracle() {
        let (gnn, gns, wnn, wns) = (1.3, 0.4, 2.0, 0.7);
        // Γ^{NS} = P^N Γ P^S has coefficient (0, 1)
        let (_, fp, lr) = hand_setup([wnn, wns, wns, 1.5], [gnn, gns, -0.5, 0.9]);
        let u = upsilon(&fp, &lr).unwrap();
        let expect = gns - gnn * wns / wnn;
        assert_relative_eq!(u.coeffs()[(0, 1)], expect, epsilon = 1e-14);
        assert_eq!(u.coeffs()[(0, 0)], 0.0);
        assert_eq!(u.coeffs()[(1, 0)], 0.0);
        assert_eq!(u.coeffs()[(1, 1)], 0.0);

        let (_, fp, lr) = hand_setup([wnn, 0.0, 0.0, 1.5], [gnn, 0.0, -0.5, 0.9]);
        assert_eq!(upsilon(&fp, &lr).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn phi_zero_has_no_correction() {
        let x = random_series(5, 40, 4);
        let fp = ordinary_fpca(&x, 0, DeterministicMode::None).unwrap();
        let z = build_z(&x, &fp).unwrap();
        let lr = operator_lrcov(&z, &KernelSpec::parzen(), 3.0).unwrap();
        let xm = modified_series(&x, &fp, &lr).unwrap();
        assert_relative_eq!(xm.coords(), x.tail(1).coords(), epsilon = 1e-15);
        assert_eq!(upsilon(&fp, &lr).unwrap().max_abs(), 0.0);

        let r = modified_fpca(&x, 0, &KernelSpec::parzen(), 3.0, DeterministicMode::None).unwrap();
        assert_eq!(r.proj_n.max_abs(), 0.0);
        let c = sample_covariance(&x.tail(1));
        let direct = sym_eigen_sorted(c.coeffs().clone()).0;
        for (a, b) in r.spectrum.eigenvalues().iter().zip(&direct) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn upsilon_block_structure() {
        let x = random_series(8, 60, 5);
        let fp = ordinary_fpca(&x, 2, DeterministicMode::Constant).unwrap();
        let u = residualize(&x, DeterministicMode::Constant).unwrap();
        let z = build_z(&u, &fp).unwrap();
        let lr = operator_lrcov(&z, &KernelSpec::parzen(), 4.0).unwrap();
        let ups = upsilon(&fp, &lr).unwrap();
        let scale = ups.max_abs().max(1.0);
        let left = fp.proj_s.compose(&ups).unwrap();
        let right = ups.compose(&fp.proj_n).unwrap();
        assert!(left.max_abs() < 1e-10 * scale);
        assert!(right.max_abs() < 1e-10 * scale);
        let sandwiched = fp.proj_n.compose(&ups).unwrap().compose(&fp.proj_s).unwrap();
        assert_relative_eq!(sandwiched.coeffs(), ups.coeffs(), epsilon = 1e-10 * scale);
    }

    #[test]
    fn modified_fpca_invariants() {
        let x = random_series(10, 80, 6);
        let r = modified_fpca(&x, 1, &KernelSpec::parzen(), 4.0, DeterministicMode::Constant).unwrap();
        let sum = r.proj_n.add(&r.proj_s).unwrap();
        assert_relative_eq!(sum.coeffs(), &DMatrix::identity(10, 10), epsilon = 1e-10);
        let pp = r.proj_n.compose(&r.proj_n).unwrap();
        assert_relative_eq!(pp.coeffs(), r.proj_n.coeffs(), epsilon = 1e-10);
        assert_relative_eq!(r.proj_n.trace(), 1.0, epsilon = 1e-10);
        assert!(r.spectrum.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        let scale = sample_covariance(&r.modified_series).op_norm();
        assert!(r.asymmetry < 1e-8 * scale);
        assert_eq!(r.modified_series.len(), 79);
    }

    #[test]
    fn full_dimension_reduces_to_ordinary_fpca() {
        let x = random_series(3, 30, 7);
        let r = modified_fpca(&x, 3, &KernelSpec::parzen(), 3.0, DeterministicMode::None).unwrap();
        assert_eq!(r.proj_s.max_abs() < 1e-10, true);
        assert_relative_eq!(r.modified_series.coords(), x.tail(1).coords(), epsilon = 1e-15);
    }

    #[test]
    fn harris_without_cross_terms_keeps_sample() {
        let (x, fp, mut lr) = hand_setup([2.0, 0.0, 0.0, 1.5], [1.0, 0.0, 0.0, 0.9]);
        lr.gamma = LinearOperator::from_coeffs(x.grid().clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.9])).unwrap();
        let endo = endogeneity_correction(&fp, &lr).unwrap();
        assert_eq!(endo.amax(), 0.0);
        let gamma_sn = fp.proj_s.coeffs() * lr.gamma.coeffs() * fp.proj_n.coeffs();
        assert_eq!(gamma_sn.amax(), 0.0);
    }

    #[test]
    fn harris_rejects_rank_deficient_data() {
        // 60-point grid, curves spanned by only 10 smooth functions
        let g = Grid::uniform(60, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut walk = 0.0;
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                walk += rng.sample::<f64, _>(rand_distr::StandardNormal);
                let c: Vec<f64> = (0..10).map(|j| rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.5f64.powi(j)).collect();
                g.points()
                    .iter()
                    .map(|u| walk + (1..10).map(|j| c[j] * (std::f64::consts::PI * j as f64 * u).cos()).sum::<f64>())
                    .collect()
            })
            .collect();
        let x = FunctionalSeries::from_rows(g, &rows).unwrap();
        assert!(matches!(
            harris_fpca(&x, 1, &KernelSpec::parzen(), 5.0, DeterministicMode::None),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn degenerate_omega_is_rank_deficient() {
        // constant e1 component: ΔX has no variation along the trend direction
        let g = unit_weight_grid(2);
        // alternating second coordinate has mean zero, so e1 is exactly the top eigenvector
        let rows: Vec<Vec<f64>> = (0..10).map(|t| vec![10.0, if t % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let x = FunctionalSeries::from_rows(g, &rows).unwrap();
        let err = modified_fpca(&x, 1, &KernelSpec::parzen(), 2.0, DeterministicMode::None).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "{err:?}");
    }
}
