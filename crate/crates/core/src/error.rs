use thiserror::Error;

/// Errors raised by the estimation, testing and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("functions or operators are defined on different grids")]
    GridMismatch,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("operator is not self-adjoint (asymmetry {asymmetry:.3e})")]
    NotSelfAdjoint { asymmetry: f64 },
    #[error("rank deficient: eigenvalue {index} is {value:.3e}, below threshold {threshold:.3e}")]
    RankDeficient {
        index: usize,
        value: f64,
        threshold: f64,
    },
    #[error("vectors are not orthonormal (Gram deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("phi = {phi} exceeds the admissible maximum {max}")]
    PhiTooLarge { phi: usize, max: usize },
    #[error("sample too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("bandwidth must be positive and finite, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("kernel argument must be nonnegative, got {0}")]
    NegativeKernelArgument(f64),
    #[error("long-run variance of the projected series is singular")]
    SingularLrv,
    #[error("K = {k} must satisfy phi0 = {phi0} < K <= {max}")]
    KOutOfRange { k: usize, phi0: usize, max: usize },
    #[error("no critical values for mode {mode}, dim_w = {dim_w}, dim_b = {dim_b}, level {level}")]
    MissingCriticalValues {
        mode: String,
        dim_w: usize,
        dim_b: usize,
        level: f64,
    },
    #[error("subspace must be non-empty")]
    EmptySubspace,
    #[error("covariance of Z is ill-conditioned (min/max eigenvalue ratio {ratio:.3e})")]
    IllConditioned { ratio: f64 },
    #[error("Gram matrix of the simulated Brownian motion is singular")]
    GramSingular,
    #[error("values outside (0, 1) at grid indices {0:?}")]
    OutOfDomain(Vec<usize>),
    #[error("density value below floor at grid indices {0:?}")]
    NonPositiveDensity(Vec<usize>),
    #[error("density integrates to {0}, not 1")]
    NotNormalized(f64),
    #[error("function is not centered (quadrature mean {0:.3e})")]
    NotCentered(f64),
    #[error("range of the function ({0:.1}) would overflow the exponential")]
    Overflow(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
