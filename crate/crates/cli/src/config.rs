//! Run configuration: command-line flags merged over an optional flat
//! `key = value` file whose keys are the long flag names.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, ValueEnum};
use fmfpca_core::{BandwidthRule, DeterministicMode, KernelFamily};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformKind {
    Logit,
    Clr,
    InverseClr,
}

/// Every option any command understands. Commands ignore the ones they do not use.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct Flags {
    /// Flat `key = value` file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Wide-format input: grid on the first row, one curve per following row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Deterministic terms: none, const or trend.
    #[arg(long)]
    pub mode: Option<DeterministicMode>,
    /// Kernel of the long-run covariance estimator: parzen, bartlett or flat.
    #[arg(long)]
    pub kernel: Option<KernelFamily>,
    /// Bandwidth: t13 (T^{1/3}), t25 (T^{2/5}) or a positive number.
    #[arg(long)]
    pub h: Option<BandwidthRule>,
    /// K - φ0, the number of directions tested beyond the hypothesized ones.
    #[arg(long)]
    pub k_policy: Option<usize>,
    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Attractor dimension (estimate, test-subspace-in, montecarlo).
    #[arg(long)]
    pub phi: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Critical-value cache file.
    #[arg(long)]
    pub cv_cache: Option<PathBuf>,
    /// Simulate missing critical values instead of failing.
    #[arg(long)]
    pub simulate_cv: bool,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replications for critical-value simulation.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Brownian grid steps for critical-value simulation.
    #[arg(long)]
    pub ngrid: Option<usize>,
    /// Accept fewer critical-value replications than the production floor.
    #[arg(long)]
    pub allow_small: bool,
    /// Wide-format file of curves spanning the subspace M.
    #[arg(long)]
    pub subspace: Option<PathBuf>,
    /// Upper bound of the sequential search.
    #[arg(long)]
    pub phi_cap: Option<usize>,
    /// Minimum number of φ0 rows in the test-dim report.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Largest φ0 tabulated by simulate-cv.
    #[arg(long)]
    pub max_phi0: Option<usize>,
    /// Quantile levels for simulate-cv, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Hypothesized dimensions swept by montecarlo, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub phi0: Option<Vec<usize>>,
    /// φ - φ0 offsets swept by montecarlo (0 gives size, 1 and 2 power).
    #[arg(long, value_delimiter = ',')]
    pub offset: Option<Vec<usize>>,
    /// Sample lengths swept by montecarlo, comma separated.
    #[arg(long = "sample-size", value_delimiter = ',')]
    pub sample_size: Option<Vec<usize>>,
    /// Persistence scheme for montecarlo: lower, higher, or `min,max`.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub n_reps: Option<usize>,
    /// Smooth simulated curves with this many quadratic B-splines.
    #[arg(long)]
    pub smoothing: Option<usize>,
    /// transform: logit, clr or inverse-clr.
    #[arg(long, value_enum)]
    pub kind: Option<TransformKind>,
}

#[derive(Parser)]
#[command(no_binary_name = true, disable_help_flag = true)]
struct FileFlags {
    #[command(flatten)]
    flags: Flags,
}

/// Parse a flat `key = value` configuration. Keys are long flag names
/// (`k-policy` or `k_policy`); `#` starts a comment; booleans take `true`/`false`.
pub fn parse_config_text(text: &str) -> Result<Flags, CliError> {
    let mut argv: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(CliError::config("config files cannot include other config files"));
        }
        if key == "simulate-cv" || key == "allow-small" {
            match value {
                "true" => argv.push(format!("--{key}")),
                "false" => {}
                _ => {
                    return Err(CliError::config(format!(
                        "config line {}: {key} must be true or false",
                        i + 1
                    )))
                }
            }
            continue;
        }
        argv.push(format!("--{key}"));
        argv.push(value.to_string());
    }
    FileFlags::try_parse_from(&argv)
        .map(|f| f.flags)
        .map_err(|e| CliError::config(format!("config file: {}", e.kind_message(&argv))))
}

trait KindMessage {
    fn kind_message(&self, argv: &[String]) -> String;
}

impl KindMessage for clap::Error {
    fn kind_message(&self, argv: &[String]) -> String {
        use clap::error::{ContextKind, ErrorKind};
        match self.kind() {
            ErrorKind::UnknownArgument => {
                let arg = self
                    .get(ContextKind::InvalidArg)
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| argv.join(" "));
                format!("unknown key {}", arg.trim_start_matches('-'))
            }
            _ => self.render().to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string(),
        }
    }
}

pub fn load_config_file(path: &Path) -> Result<Flags, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_text(&text)
}

/// `flags` wins over `file` field by field.
pub fn merge(flags: Flags, file: Flags) -> Flags {
    Flags {
        config: flags.config,
        input: flags.input.or(file.input),
        mode: flags.mode.or(file.mode),
        kernel: flags.kernel.or(file.kernel),
        h: flags.h.or(file.h),
        k_policy: flags.k_policy.or(file.k_policy),
        alpha: flags.alpha.or(file.alpha),
        phi: flags.phi.or(file.phi),
        seed: flags.seed.or(file.seed),
        cv_cache: flags.cv_cache.or(file.cv_cache),
        simulate_cv: flags.simulate_cv || file.simulate_cv,
        format: flags.format.or(file.format),
        out: flags.out.or(file.out),
        reps: flags.reps.or(file.reps),
        ngrid: flags.ngrid.or(file.ngrid),
        allow_small: flags.allow_small || file.allow_small,
        subspace: flags.subspace.or(file.subspace),
        phi_cap: flags.phi_cap.or(file.phi_cap),
        rows: flags.rows.or(file.rows),
        max_phi0: flags.max_phi0.or(file.max_phi0),
        levels: flags.levels.or(file.levels),
        phi0: flags.phi0.or(file.phi0),
        offset: flags.offset.or(file.offset),
        sample_size: flags.sample_size.or(file.sample_size),
        beta: flags.beta.or(file.beta),
        n_reps: flags.n_reps.or(file.n_reps),
        smoothing: flags.smoothing.or(file.smoothing),
        kind: flags.kind.or(file.kind),
    }
}

/// Merge in the config file named by `--config`, if any, then validate.
pub fn resolve(flags: Flags) -> Result<Flags, CliError> {
    let merged = match &flags.config {
        Some(path) => {
            let file = load_config_file(path)?;
            merge(flags, file)
        }
        None => flags,
    };
    validate(&merged)?;
    Ok(merged)
}

/// Checks that do not depend on the command.
pub fn validate(f: &Flags) -> Result<(), CliError> {
    if let Some(a) = f.alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(CliError::config(format!("alpha must lie in (0, 1), got {a}")));
        }
    }
    if f.k_policy == Some(0) {
        return Err(CliError::config("k-policy must be at least 1"));
    }
    if let Some(BandwidthRule::Fixed(h)) = f.h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::config(format!("bandwidth must be positive, got {h}")));
        }
    }
    if f.reps == Some(0) || f.n_reps == Some(0) {
        return Err(CliError::config("replication counts must be positive"));
    }
    if let Some(levels) = &f.levels {
        if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(CliError::config(format!("quantile level {l} outside (0, 1)")));
        }
    }
    if let Some(ts) = &f.sample_size {
        if ts.iter().any(|t| *t < 4) {
            return Err(CliError::config("sample sizes must be at least 4"));
        }
    }
    if let Some(b) = &f.beta {
        parse_beta(b)?;
    }
    Ok(())
}

/// `lower`, `higher`, or an explicit `min,max` pair.
pub fn parse_beta(text: &str) -> Result<(f64, f64), CliError> {
    match text.trim() {
        "lower" => Ok((0.0, 0.5)),
        "higher" => Ok((0.5, 0.7)),
        other => {
            let parts: Vec<&str> = other.split(',').map(str::trim).collect();
            let parsed: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).collect();
            match parsed.as_slice() {
                [lo, hi] if parts.len() == 2 && lo.is_finite() && hi.is_finite() => Ok((*lo, *hi)),
                _ => Err(CliError::config(format!("beta must be lower, higher or min,max; got '{other}'"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_match_flags() {
        let f = parse_config_text("mode = trend\nk_policy = 2\nh = t25 # comment\nsimulate-cv = true\nlevels = 0.95,0.99\n").unwrap();
        assert_eq!(f.mode, Some(DeterministicMode::LinearTrend));
        assert_eq!(f.k_policy, Some(2));
        assert_eq!(f.h, Some(BandwidthRule::TwoFifths));
        assert!(f.simulate_cv);
        assert_eq!(f.levels, Some(vec![0.95, 0.99]));
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = parse_config_text("bandwidth = 3\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
        assert!(parse_config_text("mode trend\n").is_err());
        assert!(parse_config_text("mode = sideways\n").is_err());
        assert!(parse_config_text("simulate-cv = yes\n").is_err());
    }

    #[test]
    fn flags_win() {
        let file = parse_config_text("mode = trend\nalpha = 0.01\n").unwrap();
        let flags = Flags { mode: Some(DeterministicMode::Constant), ..Default::default() };
        let m = merge(flags, file);
        assert_eq!(m.mode, Some(DeterministicMode::Constant));
        assert_eq!(m.alpha, Some(0.01));
    }

    #[test]
    fn validation() {
        assert!(validate(&Flags { alpha: Some(1.5), ..Default::default() }).is_err());
        assert!(validate(&Flags { k_policy: Some(0), ..Default::default() }).is_err());
        assert!(validate(&Flags { beta: Some("0.2".into()), ..Default::default() }).is_err());
        assert_eq!(parse_beta("0.1, 0.4").unwrap(), (0.1, 0.4));
    }
}
