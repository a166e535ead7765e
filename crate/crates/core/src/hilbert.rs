//! Discretized Hilbert-space arithmetic.
//!
//! Functions live on a [`Grid`] with quadrature weights `w_i`, and the inner
//! product is `<f, g> = sum_i w_i f(u_i) g(u_i)`. Operators are stored in
//! orthonormal coordinates `x~ = D^{1/2} x` (with `D = diag(w)`), so that the
//! adjoint of an operator is the transpose of its coefficient matrix and the
//! standard symmetric eigensolvers apply without weighted bookkeeping.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold used for all numerical rank decisions.
pub const TOL_RANK: f64 = 1e-10;

/// Largest asymmetry (relative to the largest entry) that is silently
/// symmetrized away before an eigendecomposition.
pub const TOL_SYMMETRY: f64 = 1e-10;

/// Largest Gram deviation from the identity accepted as "orthonormal".
pub const TOL_ORTHONORMAL: f64 = 1e-8;

/// Abscissae and quadrature weights of a discretized function domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
}

impl Grid {
    /// Grid with trapezoid quadrature weights.
    pub fn new(points: Vec<f64>) -> Result<Arc<Grid>> {
        Self::check_points(&points)?;
        let p = points.len();
        let mut weights = vec![0.0; p];
        for i in 0..p - 1 {
            let half = 0.5 * (points[i + 1] - points[i]);
            weights[i] += half;
            weights[i + 1] += half;
        }
        Self::with_weights(points, weights)
    }

    /// `p` equally spaced points on `[a, b]` with trapezoid weights.
    pub fn uniform(p: usize, a: f64, b: f64) -> Result<Arc<Grid>> {
        if p < 2 || !(b > a) {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs p >= 2 and a < b (p = {p}, a = {a}, b = {b})"
            )));
        }
        let step = (b - a) / (p - 1) as f64;
        let mut points: Vec<f64> = (0..p).map(|i| a + step * i as f64).collect();
        points[p - 1] = b;
        Self::new(points)
    }

    /// Grid with caller-supplied quadrature weights.
    ///
    /// Weights must be strictly positive: the orthonormal coordinate map
    /// `x -> D^{1/2} x` has to be invertible.
    pub fn with_weights(points: Vec<f64>, weights: Vec<f64>) -> Result<Arc<Grid>> {
        Self::check_points(&points)?;
        if weights.len() != points.len() {
            return Err(Error::InvalidGrid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "quadrature weight {i} is not positive ({})",
                weights[i]
            )));
        }
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Arc::new(Grid {
            points,
            weights,
            sqrt_weights,
        }))
    }

    fn check_points(points: &[f64]) -> Result<()> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("at least 2 points required".into()));
        }
        if points.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidGrid("non-finite abscissa".into()));
        }
        if let Some(i) = points.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total quadrature mass, `|S|` for the support `S`.
    pub fn domain_length(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Quadrature integral of grid values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Orthonormal coordinates of grid values.
    pub fn to_coords(&self, values: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            values.len(),
            values.iter().zip(&self.sqrt_weights).map(|(v, s)| v * s),
        )
    }

    /// Grid values from orthonormal coordinates.
    pub fn from_coords(&self, coords: &[f64]) -> Vec<f64> {
        coords
            .iter()
            .zip(&self.sqrt_weights)
            .map(|(c, s)| c / s)
            .collect()
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

pub(crate) fn ensure_same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if same_grid(a, b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// A single functional observation: values at the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimMismatch(format!(
                "{} values on a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&u| f(u)).collect();
        Self::new(grid, values)
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Build from orthonormal coordinates.
    pub fn from_coords(grid: Arc<Grid>, coords: &[f64]) -> Result<Self> {
        let values = grid.from_coords(coords);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn coords(&self) -> DVector<f64> {
        self.grid.to_coords(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &GridFunction) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }
}

/// Quadrature inner product `sum_i w_i f(u_i) g(u_i)`.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    ensure_same_grid(&f.grid, &g.grid)?;
    Ok(f.grid
        .weights()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// Bounded linear operator on the discretized space, in orthonormal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    grid: Arc<Grid>,
    coeffs: DMatrix<f64>,
}

impl LinearOperator {
    pub fn from_coeffs(grid: Arc<Grid>, coeffs: DMatrix<f64>) -> Result<Self> {
        let p = grid.len();
        if coeffs.nrows() != p || coeffs.ncols() != p {
            return Err(Error::DimMismatch(format!(
                "{}x{} coefficient matrix on a {p}-point grid",
                coeffs.nrows(),
                coeffs.ncols()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("operator coefficients"));
        }
        Ok(Self { grid, coeffs })
    }

    pub(crate) fn from_coeffs_unchecked(grid: Arc<Grid>, coeffs: DMatrix<f64>) -> Self {
        debug_assert_eq!(coeffs.shape(), (grid.len(), grid.len()));
        Self { grid, coeffs }
    }

    pub fn zero(grid: Arc<Grid>) -> Self {
        let p = grid.len();
        Self {
            grid,
            coeffs: DMatrix::zeros(p, p),
        }
    }

    pub fn identity(grid: Arc<Grid>) -> Self {
        let p = grid.len();
        Self {
            grid,
            coeffs: DMatrix::identity(p, p),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        ensure_same_grid(&self.grid, &f.grid)?;
        let out = &self.coeffs * f.coords();
        GridFunction::from_coords(self.grid.clone(), out.as_slice())
    }

    pub fn adjoint(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.transpose(),
        }
    }

    /// `self ∘ other`, i.e. `x -> self(other(x))`.
    pub fn compose(&self, other: &LinearOperator) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            coeffs: &self.coeffs * &other.coeffs,
        })
    }

    pub fn add(&self, other: &LinearOperator) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            coeffs: &self.coeffs + &other.coeffs,
        })
    }

    pub fn sub(&self, other: &LinearOperator) -> Result<Self> {
        ensure_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            coeffs: &self.coeffs - &other.coeffs,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: &self.coeffs * c,
        }
    }

    /// Largest absolute entry of `A - A*`.
    pub fn asymmetry(&self) -> f64 {
        let p = self.dim();
        let mut worst = 0.0f64;
        for j in 0..p {
            for i in (j + 1)..p {
                worst = worst.max((self.coeffs[(i, j)] - self.coeffs[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(A + A*) / 2`.
    pub fn symmetrized(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: (&self.coeffs + self.coeffs.transpose()) * 0.5,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.amax()
    }

    /// Operator norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        if self.coeffs.iter().all(|v| *v == 0.0) {
            return 0.0;
        }
        if self.asymmetry() <= TOL_SYMMETRY * self.max_abs() {
            let eig = self.symmetrized().coeffs.symmetric_eigen();
            eig.eigenvalues.amax()
        } else {
            self.coeffs
                .singular_values()
                .iter()
                .copied()
                .fold(0.0, f64::max)
        }
    }

    pub fn trace(&self) -> f64 {
        self.coeffs.trace()
    }
}

/// `x ⊗ y`, the operator `z -> <x, z> y`.
pub fn tensor(x: &GridFunction, y: &GridFunction) -> Result<LinearOperator> {
    ensure_same_grid(&x.grid, &y.grid)?;
    let coeffs = y.coords() * x.coords().transpose();
    Ok(LinearOperator::from_coeffs_unchecked(x.grid.clone(), coeffs))
}

/// Spectral decomposition of a self-adjoint operator.
///
/// Eigenvalues are sorted in descending order and each eigenvector is signed
/// so that its largest-magnitude orthonormal coordinate is positive.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    grid: Arc<Grid>,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl EigenSystem {
    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<f64>, vectors: DMatrix<f64>) -> Self {
        Self {
            grid,
            values,
            vectors,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Eigenvectors as columns, in orthonormal coordinates.
    pub fn vector_coords(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn eigenvector(&self, j: usize) -> GridFunction {
        let col = self.vectors.column(j);
        GridFunction::from_coords(self.grid.clone(), col.as_slice())
            .expect("eigenvectors are finite")
    }

    pub fn eigenvectors(&self) -> Vec<GridFunction> {
        (0..self.len()).map(|j| self.eigenvector(j)).collect()
    }

    /// `sum_{j < m} v_j ⊗ v_j`.
    pub fn leading_projection(&self, m: usize) -> LinearOperator {
        let v = self.vectors.columns(0, m);
        LinearOperator::from_coeffs_unchecked(self.grid.clone(), &v * v.transpose())
    }

    /// `sum_j λ_j v_j ⊗ v_j`.
    pub fn reconstruct(&self) -> LinearOperator {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        LinearOperator::from_coeffs_unchecked(self.grid.clone(), scaled * self.vectors.transpose())
    }
}

/// Symmetric eigendecomposition of a coefficient matrix, sorted descending
/// with the deterministic sign convention. Ties keep solver order.
pub(crate) fn sym_eigen_sorted(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let lead = col.iamax();
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Full spectrum of a self-adjoint operator.
pub fn eigendecompose(a: &LinearOperator) -> Result<EigenSystem> {
    if a.coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("operator coefficients"));
    }
    let asym = a.asymmetry();
    let scale = a.max_abs();
    if asym > TOL_SYMMETRY * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSelfAdjoint { asymmetry: asym });
    }
    let (values, vectors) = sym_eigen_sorted(a.symmetrized().coeffs);
    Ok(EigenSystem {
        grid: a.grid.clone(),
        values,
        vectors,
    })
}

/// Inverse of a positive definite `m x m` symmetric matrix through its
/// eigendecomposition, rejecting eigenvalues at or below `TOL_RANK` times
/// `scale` (the largest eigenvalue of the operator it was taken from).
pub(crate) fn inverse_on_frame(a: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let (values, vectors) = sym_eigen_sorted(sym);
    let threshold = TOL_RANK * scale.max(values[0]).max(0.0);
    let last = values[m - 1];
    if !(last > threshold) || !(values[0] > 0.0) {
        return Err(Error::RankDeficient {
            index: m,
            value: last,
            threshold,
        });
    }
    let inv_diag = DMatrix::from_diagonal(&DVector::from_iterator(m, values.iter().map(|v| 1.0 / v)));
    Ok(&vectors * inv_diag * vectors.transpose())
}

/// The `m`-regularized inverse `sum_{j <= m} a_j^{-1} u_j ⊗ u_j` of a
/// self-adjoint positive semidefinite operator.
pub fn regularized_inverse(a: &LinearOperator, m: usize) -> Result<LinearOperator> {
    if m == 0 {
        return Ok(LinearOperator::zero(a.grid.clone()));
    }
    if m > a.dim() {
        return Err(Error::DimMismatch(format!(
            "m = {m} exceeds dimension {}",
            a.dim()
        )));
    }
    let eig = eigendecompose(a)?;
    let threshold = TOL_RANK * eig.values[0].max(0.0);
    let am = eig.values[m - 1];
    if !(am > threshold) {
        return Err(Error::RankDeficient {
            index: m,
            value: am,
            threshold,
        });
    }
    let p = a.dim();
    let v = eig.vectors.columns(0, m);
    let scaled = DMatrix::from_fn(p, m, |i, j| v[(i, j)] / eig.values[j]);
    Ok(LinearOperator::from_coeffs_unchecked(
        a.grid.clone(),
        scaled * v.transpose(),
    ))
}

/// Gram matrix `<v_i, v_j>` of a list of functions.
pub fn gram_matrix(vs: &[GridFunction]) -> Result<DMatrix<f64>> {
    let k = vs.len();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let ip = inner_product(&vs[i], &vs[j])?;
            g[(i, j)] = ip;
            g[(j, i)] = ip;
        }
    }
    Ok(g)
}

/// Modified Gram-Schmidt on orthonormal coordinates; columns of the result
/// span the same space as the inputs.
pub(crate) fn gram_schmidt(mut q: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let qi = q.column(i).into_owned();
            q.column_mut(j).axpy(-proj, &qi, 1.0);
        }
        let n = q.column(j).norm();
        q.column_mut(j).unscale_mut(n);
    }
    q
}

/// Ratio of the largest to the smallest Gram eigenvalue; infinite when the
/// functions are linearly dependent.
pub fn gram_matrix_condition(vs: &[GridFunction]) -> Result<f64> {
    if vs.is_empty() {
        return Err(Error::EmptySubspace);
    }
    let values = gram_matrix(vs)?.symmetric_eigenvalues();
    let (lo, hi) = (values.min(), values.max());
    Ok(if lo > 0.0 { hi / lo } else { f64::INFINITY })
}

/// Orthonormal basis of `span(vs)` in input order (Gram-Schmidt).
pub fn orthonormalize(vs: &[GridFunction]) -> Result<Vec<GridFunction>> {
    let Some(first) = vs.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid().clone();
    let mut q = DMatrix::zeros(grid.len(), vs.len());
    for (j, v) in vs.iter().enumerate() {
        ensure_same_grid(&grid, v.grid())?;
        q.set_column(j, &v.coords());
    }
    let q = gram_schmidt(q);
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient { index: 0, value: 0.0, threshold: 0.0 });
    }
    q.column_iter()
        .map(|c| GridFunction::from_coords(grid.clone(), c.as_slice()))
        .collect()
}

/// Orthogonal projection onto `span(vs)`. The inputs must already be
/// orthonormal to within `TOL_ORTHONORMAL`; they are re-orthonormalized to
/// remove the residual error. An empty list gives the zero operator.
pub fn projection_from(grid: &Arc<Grid>, vs: &[GridFunction]) -> Result<LinearOperator> {
    if vs.is_empty() {
        return Ok(LinearOperator::zero(grid.clone()));
    }
    for v in vs {
        ensure_same_grid(grid, v.grid())?;
    }
    let gram = gram_matrix(vs)?;
    let deviation = (gram - DMatrix::identity(vs.len(), vs.len())).amax();
    if deviation > TOL_ORTHONORMAL {
        return Err(Error::NotOrthonormal { deviation });
    }
    let mut q = DMatrix::zeros(grid.len(), vs.len());
    for (j, v) in vs.iter().enumerate() {
        q.set_column(j, &v.coords());
    }
    let q = gram_schmidt(q);
    Ok(LinearOperator::from_coeffs_unchecked(
        grid.clone(),
        &q * q.transpose(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_grid() -> Arc<Grid> {
        Grid::uniform(201, 0.0, 1.0).unwrap()
    }

    /// Grid whose orthonormal coordinate basis vectors are `e_i / sqrt(w_i)`.
    fn basis(grid: &Arc<Grid>, i: usize) -> GridFunction {
        let mut c = vec![0.0; grid.len()];
        c[i] = 1.0;
        GridFunction::from_coords(grid.clone(), &c).unwrap()
    }

    #[test]
    fn trapezoid_weights_sum_to_domain_length() {
        let g = unit_grid();
        assert_relative_eq!(g.domain_length(), 1.0, epsilon = 1e-12);
        let g = Grid::new(vec![0.0, 0.1, 0.5, 2.0]).unwrap();
        assert_relative_eq!(g.domain_length(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_bad_points() {
        assert!(Grid::new(vec![0.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(Grid::new(vec![1.0, 0.5, 0.0]).is_err());
        assert!(Grid::with_weights(vec![0.0, 1.0], vec![0.5, 0.0]).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = unit_grid();
        let one = GridFunction::from_fn(g.clone(), |_| 1.0).unwrap();
        assert_relative_eq!(inner_product(&one, &one).unwrap(), 1.0, epsilon = 1e-12);

        // trapezoid error for ∫u² is h²/6 ≈ 4.2e-6
        let u = GridFunction::from_fn(g.clone(), |u| u).unwrap();
        assert!((inner_product(&u, &u).unwrap() - 1.0 / 3.0).abs() <= 1e-4);

        let s = GridFunction::from_fn(g.clone(), |u| 2f64.sqrt() * (2.0 * PI * u).sin()).unwrap();
        let c = GridFunction::from_fn(g.clone(), |u| 2f64.sqrt() * (2.0 * PI * u).cos()).unwrap();
        assert!(inner_product(&s, &c).unwrap().abs() < 1e-10);
    }

    #[test]
    fn inner_product_grid_mismatch() {
        let a = GridFunction::zero(Grid::uniform(5, 0.0, 1.0).unwrap());
        let b = GridFunction::zero(Grid::uniform(6, 0.0, 1.0).unwrap());
        assert_eq!(inner_product(&a, &b), Err(Error::GridMismatch));
    }

    #[test]
    fn tensor_examples() {
        let g = Grid::uniform(4, 0.0, 1.0).unwrap();
        let e1 = basis(&g, 0);
        let e2 = basis(&g, 1);
        let t = tensor(&e1, &e1).unwrap();
        let mut expect = DMatrix::zeros(4, 4);
        expect[(0, 0)] = 1.0;
        assert_relative_eq!(t.coeffs(), &expect, epsilon = 1e-15);

        let t = tensor(&e1, &e2).unwrap();
        let out = t.apply(&e1).unwrap();
        assert_relative_eq!(out.coords(), e2.coords(), epsilon = 1e-12);
        let out = t.apply(&e2).unwrap();
        assert!(out.norm() < 1e-15);
    }

    #[test]
    fn eigendecompose_examples() {
        let g = Grid::uniform(2, 0.0, 2.0).unwrap(); // weights (1, 1)
        let a = LinearOperator::from_coeffs(g.clone(), DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        let e = eigendecompose(&a).unwrap();
        assert_eq!(e.eigenvalues(), &[3.0, 1.0]);
        assert_relative_eq!(e.vector_coords()[(0, 0)], 1.0);
        assert_relative_eq!(e.vector_coords()[(1, 1)], 1.0);

        let a = LinearOperator::from_coeffs(g.clone(), DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let e = eigendecompose(&a).unwrap();
        assert_relative_eq!(e.eigenvalues()[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues()[1], 1.0, epsilon = 1e-12);
        let r = 0.5f64.sqrt();
        let v0 = e.vector_coords().column(0);
        let v1 = e.vector_coords().column(1);
        assert_relative_eq!(v0[0].abs(), r, epsilon = 1e-12);
        assert_relative_eq!(v0[0], v0[1], epsilon = 1e-12);
        assert_relative_eq!(v1[0], -v1[1], epsilon = 1e-12);

        let z = eigendecompose(&LinearOperator::zero(g)).unwrap();
        assert!(z.eigenvalues().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eigendecompose_rejects_asymmetric() {
        let g = Grid::uniform(2, 0.0, 2.0).unwrap();
        let a = LinearOperator::from_coeffs(g, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).unwrap();
        assert!(matches!(eigendecompose(&a), Err(Error::NotSelfAdjoint { .. })));
    }

    #[test]
    fn regularized_inverse_examples() {
        let g = Grid::uniform(3, 0.0, 2.0).unwrap();
        let w = g.weights().to_vec();
        // diag(4, 1, 0) in coordinates
        let a = LinearOperator::from_coeffs(g.clone(), DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0]))).unwrap();
        let inv = regularized_inverse(&a, 2).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0, 0.0]));
        assert_relative_eq!(inv.coeffs(), &expect, epsilon = 1e-14);
        assert!(w.iter().all(|x| *x > 0.0));

        let zero = regularized_inverse(&a, 0).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        assert!(matches!(regularized_inverse(&a, 3), Err(Error::RankDeficient { .. })));

        let id = LinearOperator::identity(g);
        let inv = regularized_inverse(&id, 3).unwrap();
        assert_relative_eq!(inv.coeffs(), id.coeffs(), epsilon = 1e-14);
    }

    #[test]
    fn projection_examples() {
        let g = Grid::uniform(5, 0.0, 1.0).unwrap();
        let e1 = basis(&g, 0);
        let e2 = basis(&g, 1);
        let e3 = basis(&g, 2);
        let p = projection_from(&g, &[e1.clone()]).unwrap();
        assert_relative_eq!(p.coeffs(), tensor(&e1, &e1).unwrap().coeffs(), epsilon = 1e-15);

        let p = projection_from(&g, &[e1.clone(), e2.clone()]).unwrap();
        let pp = p.compose(&p).unwrap();
        assert_relative_eq!(pp.coeffs(), p.coeffs(), epsilon = 1e-12);
        assert!(p.apply(&e3).unwrap().norm() < 1e-15);
        assert_relative_eq!(p.trace(), 2.0, epsilon = 1e-12);

        let p = projection_from(&g, &[]).unwrap();
        assert_eq!(p.max_abs(), 0.0);

        let bad = e1.scaled(1.1);
        assert!(matches!(projection_from(&g, &[bad]), Err(Error::NotOrthonormal { .. })));
    }

    #[test]
    fn orthonormalize_spans_inputs() {
        let g = unit_grid();
        let a = GridFunction::from_fn(g.clone(), |u| 1.0 + u).unwrap();
        let b = GridFunction::from_fn(g.clone(), |u| u * u).unwrap();
        let q = orthonormalize(&[a.clone(), b]).unwrap();
        let gram = gram_matrix(&q).unwrap();
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
        // the first output is the normalized first input
        assert!((inner_product(&q[0], &a).unwrap() - a.norm()).abs() < 1e-12);
        assert!(gram_matrix_condition(&q).unwrap() < 1.0 + 1e-10);
        assert_eq!(gram_matrix_condition(&[a.clone(), a.scaled(2.0)]).unwrap() > 1e12, true);
    }
}
