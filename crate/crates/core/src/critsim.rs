//! Simulated null distributions of the dimension test.
//!
//! Under the null the statistic converges to `∫ V(r)'V(r) dr` with
//!
//! ```text
//! V(r) = W(r) - (∫ dW B') (∫ B B')^{-1} ∫_0^r B
//! ```
//!
//! for independent standard Brownian motions `W` (dimension `K - φ0`) and
//! `B` (dimension `φ0`). With an intercept or a linear trend, `W` and `B` are
//! replaced by their bridge-type transforms while the stochastic integral
//! keeps the untransformed `dW`. Paths live on a uniform grid of `ngrid`
//! steps with increments of variance `1/ngrid`; stochastic integrals use the
//! left-point (Itô) rule.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::DeterministicMode;

/// Smallest replication count accepted for production tables.
pub const MIN_TABLE_REPS: usize = 1000;
pub const MIN_NGRID: usize = 100;
pub const DEFAULT_REPS: usize = 100_000;
pub const DEFAULT_NGRID: usize = 2000;
/// Quantile levels tabulated by default.
pub const DEFAULT_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// Draws that hit a singular Gram matrix are redrawn from the next substream
/// block; this offset keeps retries disjoint from the primary draws.
const RETRY_STREAM_OFFSET: u64 = 1 << 40;

/// Stream for draw `index` of a simulation seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Cumulative Brownian paths `W(i/n)`, `i = 0..=n`, one column per component.
fn brownian_paths(dim: usize, ngrid: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let sd = (1.0 / ngrid as f64).sqrt();
    let mut paths = DMatrix::zeros(ngrid + 1, dim);
    for j in 0..dim {
        let mut level = 0.0;
        for i in 1..=ngrid {
            let z: f64 = rng.sample(StandardNormal);
            level += sd * z;
            paths[(i, j)] = level;
        }
    }
    paths
}

/// Right-point Riemann sums `∫ f` and `∫ s f(s)` of each column.
fn integrals(paths: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = paths.nrows() - 1;
    let dr = 1.0 / n as f64;
    let mut plain = DVector::zeros(paths.ncols());
    let mut weighted = DVector::zeros(paths.ncols());
    for j in 0..paths.ncols() {
        for i in 1..=n {
            let v = paths[(i, j)];
            plain[j] += v * dr;
            weighted[j] += (i as f64 * dr) * v * dr;
        }
    }
    (plain, weighted)
}

/// Demeaned or detrended versions of the trend-block motion `B`.
fn transform_b(b: &DMatrix<f64>, mode: DeterministicMode) -> DMatrix<f64> {
    let n = b.nrows() - 1;
    let (int_b, int_sb) = integrals(b);
    DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| {
        let r = i as f64 / n as f64;
        match mode {
            DeterministicMode::None => b[(i, j)],
            DeterministicMode::Constant => b[(i, j)] - int_b[j],
            DeterministicMode::LinearTrend => {
                b[(i, j)] + (6.0 * r - 4.0) * int_b[j] + (6.0 - 12.0 * r) * int_sb[j]
            }
        }
    })
}

/// Bridge-type versions of the stationary-block motion `W`.
fn transform_w(w: &DMatrix<f64>, mode: DeterministicMode) -> DMatrix<f64> {
    let n = w.nrows() - 1;
    let (int_w, _) = integrals(w);
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        let r = i as f64 / n as f64;
        let end = w[(n, j)];
        match mode {
            DeterministicMode::None => w[(i, j)],
            DeterministicMode::Constant => w[(i, j)] - r * end,
            DeterministicMode::LinearTrend => {
                w[(i, j)] + (2.0 * r - 3.0 * r * r) * end + (6.0 * r * r - 6.0 * r) * int_w[j]
            }
        }
    })
}

/// One draw of `∫ V'V` for the given dimensions and deterministic mode.
pub fn simulate_limit_draw(
    dim_w: usize,
    dim_b: usize,
    mode: DeterministicMode,
    ngrid: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if dim_w == 0 {
        return Err(Error::InvalidConfig("dim_w must be at least 1".into()));
    }
    if ngrid < MIN_NGRID {
        return Err(Error::InvalidConfig(format!(
            "ngrid must be at least {MIN_NGRID}, got {ngrid}"
        )));
    }
    let n = ngrid;
    let dr = 1.0 / n as f64;
    let w = brownian_paths(dim_w, n, rng);
    let v_base = transform_w(&w, mode);

    let correction = if dim_b == 0 {
        None
    } else {
        let b = transform_b(&brownian_paths(dim_b, n, rng), mode);
        // ∫ dW B' with B evaluated at the left end of each increment
        let mut cross = DMatrix::<f64>::zeros(dim_w, dim_b);
        let mut gram = DMatrix::<f64>::zeros(dim_b, dim_b);
        for i in 1..=n {
            let bl = b.row(i - 1);
            for a in 0..dim_w {
                let dw = w[(i, a)] - w[(i - 1, a)];
                for c in 0..dim_b {
                    cross[(a, c)] += dw * bl[c];
                }
            }
            let br = b.row(i);
            for a in 0..dim_b {
                for c in 0..dim_b {
                    gram[(a, c)] += br[a] * br[c] * dr;
                }
            }
        }
        let chol = gram.cholesky().ok_or(Error::GramSingular)?;
        let diag_min = chol.l_dirty().diagonal().min();
        if !(diag_min > 1e-12) {
            return Err(Error::GramSingular);
        }
        let coef = &cross * chol.inverse();
        Some((coef, b))
    };

    let mut total = 0.0;
    let mut running = DVector::<f64>::zeros(dim_b);
    for i in 1..=n {
        let mut v = v_base.row(i).transpose();
        if let Some((coef, b)) = &correction {
            running += b.row(i).transpose() * dr;
            v -= coef * &running;
        }
        total += v.norm_squared() * dr;
    }
    Ok(total)
}

/// Key of a table entry: mode and the dimensions of `W` and `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CvKey {
    pub mode: DeterministicMode,
    pub dim_w: usize,
    pub dim_b: usize,
}

/// Replication count, grid size and seed a table was simulated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub reps: usize,
    pub ngrid: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub level: f64,
    pub quantile: f64,
    pub provenance: Provenance,
}

/// Simulated quantiles of the limiting null distributions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    entries: BTreeMap<CvKey, Vec<CvEntry>>,
    /// Draws that were redrawn after a singular Gram matrix.
    pub gram_retries: usize,
}

/// Two levels are the same when they agree to this tolerance.
const LEVEL_TOL: f64 = 1e-9;

pub const CSV_HEADER: &str = "mode,dim_w,dim_b,level,quantile,reps,ngrid,seed";

impl CriticalValueTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: CvKey, entry: CvEntry) {
        let list = self.entries.entry(key).or_default();
        if let Some(existing) = list
            .iter_mut()
            .find(|e| (e.level - entry.level).abs() < LEVEL_TOL)
        {
            *existing = entry;
        } else {
            list.push(entry);
            list.sort_by(|a, b| a.level.total_cmp(&b.level));
        }
    }

    pub fn merge(&mut self, other: &CriticalValueTable) {
        for (key, list) in &other.entries {
            for e in list {
                self.insert(*key, *e);
            }
        }
        self.gram_retries += other.gram_retries;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &CvKey> {
        self.entries.keys()
    }

    /// All entries for a key, sorted by level.
    pub fn entries(&self, key: &CvKey) -> &[CvEntry] {
        self.entries.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, key: &CvKey) -> bool {
        self.entries.contains_key(key)
    }

    /// Quantile at exactly `level` (e.g. 0.95).
    pub fn quantile(&self, key: &CvKey, level: f64) -> Result<f64> {
        self.entries(key)
            .iter()
            .find(|e| (e.level - level).abs() < LEVEL_TOL)
            .map(|e| e.quantile)
            .ok_or_else(|| Error::MissingCriticalValues {
                mode: key.mode.to_string(),
                dim_w: key.dim_w,
                dim_b: key.dim_b,
                level,
            })
    }

    /// Delimited text with header [`CSV_HEADER`], quantiles at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (key, list) in &self.entries {
            for e in list {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.16e},{},{},{}",
                    key.mode,
                    key.dim_w,
                    key.dim_b,
                    e.level,
                    e.quantile,
                    e.provenance.reps,
                    e.provenance.ngrid,
                    e.provenance.seed
                );
            }
        }
        out
    }

    /// Parse the cache format. Every row must carry full provenance.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty critical-value file".into()))?;
        if header.trim() != CSV_HEADER {
            return Err(Error::InvalidConfig(format!(
                "critical-value header must be '{CSV_HEADER}', got '{}'",
                header.trim()
            )));
        }
        let mut table = Self::new();
        for (i, line) in lines.enumerate() {
            let row = i + 2;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 8 || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::InvalidConfig(format!(
                    "critical-value row {row}: expected 8 non-empty fields"
                )));
            }
            let bad = |what: &str| Error::InvalidConfig(format!("critical-value row {row}: bad {what}"));
            let mode = DeterministicMode::from_str(fields[0])?;
            let dim_w = fields[1].parse().map_err(|_| bad("dim_w"))?;
            let dim_b = fields[2].parse().map_err(|_| bad("dim_b"))?;
            let level: f64 = fields[3].parse().map_err(|_| bad("level"))?;
            let quantile: f64 = fields[4].parse().map_err(|_| bad("quantile"))?;
            let reps = fields[5].parse().map_err(|_| bad("reps"))?;
            let ngrid = fields[6].parse().map_err(|_| bad("ngrid"))?;
            let seed = fields[7].parse().map_err(|_| bad("seed"))?;
            if !(level > 0.0 && level < 1.0) || !quantile.is_finite() {
                return Err(bad("level or quantile"));
            }
            table.insert(
                CvKey { mode, dim_w, dim_b },
                CvEntry {
                    level,
                    quantile,
                    provenance: Provenance { reps, ngrid, seed },
                },
            );
        }
        Ok(table)
    }
}

/// Empirical quantile by the inverse-CDF rule: the `ceil(level * n)`-th order statistic.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let rank = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// `reps` independent draws for one key, in draw order.
pub fn simulate_draws(key: CvKey, reps: usize, ngrid: usize, seed: u64) -> Result<(Vec<f64>, usize)> {
    let results: Vec<Result<(f64, usize)>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let mut retries = 0;
            loop {
                match simulate_limit_draw(key.dim_w, key.dim_b, key.mode, ngrid, &mut rng) {
                    Ok(v) => return Ok((v, retries)),
                    Err(Error::GramSingular) if retries < 100 => {
                        retries += 1;
                        rng = substream(seed, RETRY_STREAM_OFFSET * retries as u64 + i);
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    let mut draws = Vec::with_capacity(reps);
    let mut retries = 0;
    for r in results {
        let (v, k) = r?;
        draws.push(v);
        retries += k;
    }
    Ok((draws, retries))
}

/// Simulate quantiles at every level for every `(dim_w, dim_b)` pair.
///
/// Each key gets its own seed derived from `seed` and the key, so its
/// quantiles do not depend on which other keys are simulated alongside it.
pub fn critical_values(
    dims: &[(usize, usize)],
    mode: DeterministicMode,
    levels: &[f64],
    reps: usize,
    ngrid: usize,
    seed: u64,
) -> Result<CriticalValueTable> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be positive".into()));
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::InvalidConfig(format!("level {l} outside (0, 1)")));
    }
    let mut table = CriticalValueTable::new();
    for &(dim_w, dim_b) in dims {
        let key = CvKey { mode, dim_w, dim_b };
        let key_seed = key_seed(seed, key);
        let (mut draws, retries) = simulate_draws(key, reps, ngrid, key_seed)?;
        table.gram_retries += retries;
        draws.sort_by(f64::total_cmp);
        for &level in levels {
            table.insert(
                key,
                CvEntry {
                    level,
                    quantile: empirical_quantile(&draws, level),
                    provenance: Provenance { reps, ngrid, seed },
                },
            );
        }
    }
    Ok(table)
}

/// Seed for one key, derived from the table seed and the key itself.
fn key_seed(seed: u64, key: CvKey) -> u64 {
    let mode = match key.mode {
        DeterministicMode::None => 0u64,
        DeterministicMode::Constant => 1,
        DeterministicMode::LinearTrend => 2,
    };
    // splitmix64 finalizer over the packed key
    let mut z = seed
        ^ (mode << 56)
        ^ ((key.dim_w as u64) << 28)
        ^ (key.dim_b as u64)
        ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `(K - φ0, φ0)` pairs for `φ0 = 0..=max_phi0` and `K = φ0 + k_policy`.
pub fn dims_for_policy(k_policy: usize, max_phi0: usize) -> Vec<(usize, usize)> {
    (0..=max_phi0).map(|phi0| (k_policy, phi0)).collect()
}
