//! Kernel long-run covariance estimation.
//!
//! For a sample `Z_1, ..., Z_n` the two-sided and one-sided estimates are
//!
//! ```text
//! Λ0 = n^{-1} Σ_t Z_t ⊗ Z_t
//! Γ  = Λ0 + n^{-1} Σ_{s=1}^{n-1} k(s/h) Σ_{t>s} Z_t ⊗ Z_{t-s}
//! Ω  = Λ0 + n^{-1} Σ_{s=1}^{n-1} k(s/h) Σ_{t>s} (Z_t ⊗ Z_{t-s} + Z_{t-s} ⊗ Z_t)
//! ```
//!
//! so that `Ω = Γ + Γ* - Λ0` holds exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::FunctionalSeries;
use crate::hilbert::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Parzen,
    Bartlett,
    /// `k(u) = 1` on `[0, κ]`, zero beyond.
    #[serde(rename = "flat")]
    TruncatedFlat,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parzen" => Ok(Self::Parzen),
            "bartlett" => Ok(Self::Bartlett),
            "flat" | "truncated" | "truncatedflat" => Ok(Self::TruncatedFlat),
            other => Err(Error::InvalidConfig(format!("unknown kernel '{other}'"))),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Parzen => "parzen",
            Self::Bartlett => "bartlett",
            Self::TruncatedFlat => "flat",
        })
    }
}

/// Lag-window kernel with `k(0) = 1` and `k(u) = 0` for `u > kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub kappa: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        Self { family, kappa: 1.0 }
    }

    pub fn parzen() -> Self {
        Self::new(KernelFamily::Parzen)
    }

    pub fn bartlett() -> Self {
        Self::new(KernelFamily::Bartlett)
    }

    pub fn flat() -> Self {
        Self::new(KernelFamily::TruncatedFlat)
    }

    /// Kernel weight `k(u)` for `u >= 0`.
    pub fn weight(&self, u: f64) -> Result<f64> {
        if u < 0.0 || u.is_nan() {
            return Err(Error::NegativeKernelArgument(u));
        }
        Ok(self.weight_unchecked(u))
    }

    fn weight_unchecked(&self, u: f64) -> f64 {
        if u > self.kappa {
            return 0.0;
        }
        // the families are defined on [0, 1] and stretched to [0, kappa]
        let x = u / self.kappa;
        match self.family {
            KernelFamily::Parzen => {
                if x <= 0.5 {
                    1.0 - 6.0 * x * x + 6.0 * x * x * x
                } else {
                    2.0 * (1.0 - x).powi(3)
                }
            }
            KernelFamily::Bartlett => 1.0 - x,
            KernelFamily::TruncatedFlat => 1.0,
        }
    }

    /// Nonzero lag weights `(s, k(s/h))` for `1 <= s < n`, in increasing lag order.
    pub(crate) fn lag_weights(&self, n: usize, h: f64) -> Vec<(usize, f64)> {
        let max_lag = ((self.kappa * h).floor() as usize).min(n.saturating_sub(1));
        (1..=max_lag)
            .map(|s| (s, self.weight_unchecked(s as f64 / h)))
            .filter(|(_, w)| *w != 0.0)
            .collect()
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::parzen()
    }
}

/// Bandwidth as a function of the sample length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    /// `h = T^{1/3}`
    CubeRoot,
    /// `h = T^{2/5}`
    TwoFifths,
    Fixed(f64),
}

impl BandwidthRule {
    pub fn bandwidth(&self, t: usize) -> Result<f64> {
        match *self {
            Self::CubeRoot => default_bandwidth(t, Self::CubeRoot),
            Self::TwoFifths => default_bandwidth(t, Self::TwoFifths),
            Self::Fixed(h) if h.is_finite() && h > 0.0 => Ok(h),
            Self::Fixed(h) => Err(Error::NonPositiveBandwidth(h)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::CubeRoot => "t13".into(),
            Self::TwoFifths => "t25".into(),
            Self::Fixed(h) => format!("{h}"),
        }
    }
}

impl std::str::FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t13" => Ok(Self::CubeRoot),
            "t25" => Ok(Self::TwoFifths),
            other => match other.parse::<f64>() {
                Ok(h) if h.is_finite() && h > 0.0 => Ok(Self::Fixed(h)),
                _ => Err(Error::InvalidConfig(format!(
                    "bandwidth must be t13, t25 or a positive number, got '{other}'"
                ))),
            },
        }
    }
}

/// `T^{1/3}` or `T^{2/5}`, unrounded. A `Fixed` rule returns its value.
pub fn default_bandwidth(t: usize, rule: BandwidthRule) -> Result<f64> {
    if t < 2 {
        return Err(Error::TooShort { needed: 2, got: t });
    }
    let t = t as f64;
    match rule {
        BandwidthRule::CubeRoot => Ok(t.powf(1.0 / 3.0)),
        BandwidthRule::TwoFifths => Ok(t.powf(0.4)),
        BandwidthRule::Fixed(_) => rule.bandwidth(0),
    }
}

/// Estimated long-run covariance operators.
#[derive(Debug, Clone)]
pub struct LrcovPair {
    pub omega: LinearOperator,
    pub gamma: LinearOperator,
    pub lambda0: LinearOperator,
    pub bandwidth: f64,
}

/// `(Λ0, Γ)` for the columns of `data` (one column per time point).
fn one_sided(data: &DMatrix<f64>, spec: &KernelSpec, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = data.ncols();
    let inv_n = 1.0 / n as f64;
    let lambda0 = (data * data.transpose()) * inv_n;
    let mut gamma = lambda0.clone();
    for (s, w) in spec.lag_weights(n, h) {
        // Σ_{t>s} Z_t ⊗ Z_{t-s} has coefficient matrix Σ Z_{t-s} Z_t'
        let lagged = data.columns(0, n - s);
        let lead = data.columns(s, n - s);
        gamma.gemm(w * inv_n, &lagged, &lead.transpose(), 1.0);
    }
    (lambda0, gamma)
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveBandwidth(h))
    }
}

/// Operator-valued `Ω`, `Γ` and `Λ0` of a functional sample.
pub fn operator_lrcov(z: &FunctionalSeries, spec: &KernelSpec, h: f64) -> Result<LrcovPair> {
    check_bandwidth(h)?;
    if z.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: z.len(),
        });
    }
    let (lambda0, gamma) = one_sided(z.coords(), spec, h);
    let omega = &gamma + gamma.transpose() - &lambda0;
    let grid = z.grid().clone();
    Ok(LrcovPair {
        omega: LinearOperator::from_coeffs_unchecked(grid.clone(), omega),
        gamma: LinearOperator::from_coeffs_unchecked(grid.clone(), gamma),
        lambda0: LinearOperator::from_coeffs_unchecked(grid, lambda0),
        bandwidth: h,
    })
}

/// Long-run covariance matrix of an `n x K` series (rows are time points).
///
/// The result may be singular or indefinite; callers decide how to treat it.
pub fn vector_lrv(z: &DMatrix<f64>, spec: &KernelSpec, h: f64) -> Result<DMatrix<f64>> {
    check_bandwidth(h)?;
    if z.nrows() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: z.nrows(),
        });
    }
    if z.ncols() == 0 {
        return Err(Error::DimMismatch("series has no columns".into()));
    }
    let (lambda0, gamma) = one_sided(&z.transpose(), spec, h);
    Ok(&gamma + gamma.transpose() - lambda0)
}
