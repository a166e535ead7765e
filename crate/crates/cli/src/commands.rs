use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use fmfpca_core::cointtest::default_phi_cap;
use fmfpca_core::critsim::{DEFAULT_LEVELS, DEFAULT_NGRID, DEFAULT_REPS, MIN_TABLE_REPS};
use fmfpca_core::dgp::{TestDesign, EXPERIMENT_HEADER};
use fmfpca_core::transforms::DensityFunction;
use fmfpca_core::{
    attractor_in_subspace_test, clr_transform, critical_values, dimension_test, inverse_clr, logit_curve,
    modified_fpca, ordinary_fpca, rejection_experiment, subspace_in_attractor_test, BandwidthRule,
    CriticalValueTable, CvKey, DeterministicMode, DgpConfig, Error, FunctionalSeries, Grid, GridFunction,
    KernelFamily, KernelSpec, TestOutcome,
};
use serde_json::{json, Value};

use crate::config::{parse_beta, Flags, Format, TransformKind};
use crate::error::CliError;
use crate::input::{load_series, load_subspace, load_wide, write_wide};

pub const DEFAULT_MODE: DeterministicMode = DeterministicMode::Constant;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_REPORT_ROWS: usize = 3;
pub const DEFAULT_MAX_PHI0: usize = 2;
pub const DEFAULT_MC_REPS: usize = 500;

fn mode(f: &Flags) -> DeterministicMode {
    f.mode.unwrap_or(DEFAULT_MODE)
}

fn kernel(f: &Flags) -> KernelSpec {
    KernelSpec::new(f.kernel.unwrap_or(KernelFamily::Parzen))
}

fn h_rule(f: &Flags) -> BandwidthRule {
    f.h.unwrap_or(BandwidthRule::CubeRoot)
}

fn k_policy(f: &Flags) -> usize {
    f.k_policy.unwrap_or(1)
}

fn alpha(f: &Flags) -> f64 {
    f.alpha.unwrap_or(DEFAULT_ALPHA)
}

fn required<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| CliError::config(format!("--{name} is required")))
}

fn level_key(level: f64) -> String {
    format!("{level}")
}

/// `*` for rejection at 5%, `**` at 1%.
fn stars(outcome: &TestOutcome) -> &'static str {
    let rejects = |level: f64| outcome.decision_at(level).is_some_and(|d| d.reject);
    if rejects(0.99) {
        "**"
    } else if rejects(0.95) {
        "*"
    } else {
        ""
    }
}

fn outcome_json(o: &TestOutcome) -> Value {
    let cvs: BTreeMap<String, f64> = o.decisions.iter().map(|d| (level_key(d.level), d.critical_value)).collect();
    let rej: BTreeMap<String, bool> = o.decisions.iter().map(|d| (level_key(d.level), d.reject)).collect();
    json!({
        "phi0": o.phi0,
        "K": o.k,
        "statistic": o.statistic,
        "stars": stars(o),
        "critical_values": cvs,
        "reject": rej,
    })
}

fn outcomes_csv(rows: &[TestOutcome]) -> String {
    let mut out = String::from("phi0,K,statistic,stars,level,critical_value,reject\n");
    for o in rows {
        for d in &o.decisions {
            out.push_str(&format!(
                "{},{},{:.17e},{},{},{:.17e},{}\n",
                o.phi0,
                o.k,
                o.statistic,
                stars(o),
                d.level,
                d.critical_value,
                d.reject
            ));
        }
    }
    out
}

fn emit(f: &Flags, text: &str) -> Result<(), CliError> {
    match &f.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn emit_json(f: &Flags, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    emit(f, &text)
}

/// Critical values from the cache file, simulated on demand when allowed.
struct CvStore {
    table: CriticalValueTable,
    path: Option<PathBuf>,
    simulate: bool,
    reps: usize,
    ngrid: usize,
    seed: u64,
    dirty: bool,
}

impl CvStore {
    fn open(f: &Flags) -> Result<Self, CliError> {
        let table = match &f.cv_cache {
            Some(path) if path.exists() => read_table(path)?,
            _ => CriticalValueTable::new(),
        };
        let reps = f.reps.unwrap_or(DEFAULT_REPS);
        if f.simulate_cv {
            check_reps(reps, f.allow_small)?;
        }
        Ok(Self {
            table,
            path: f.cv_cache.clone(),
            simulate: f.simulate_cv,
            reps,
            ngrid: f.ngrid.unwrap_or(DEFAULT_NGRID),
            seed: f.seed.unwrap_or(0),
            dirty: false,
        })
    }

    fn ensure(&mut self, key: CvKey, levels: &[f64]) -> Result<(), CliError> {
        let missing: Vec<f64> = levels
            .iter()
            .copied()
            .filter(|l| self.table.quantile(&key, *l).is_err())
            .collect();
        let Some(&first_missing) = missing.first() else {
            return Ok(());
        };
        if !self.simulate {
            return Err(Error::MissingCriticalValues {
                mode: key.mode.to_string(),
                dim_w: key.dim_w,
                dim_b: key.dim_b,
                level: first_missing,
            }
            .into());
        }
        let mut all: Vec<f64> = DEFAULT_LEVELS.iter().copied().chain(levels.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let fresh = critical_values(&[(key.dim_w, key.dim_b)], key.mode, &all, self.reps, self.ngrid, self.seed)?;
        self.table.merge(&fresh);
        self.dirty = true;
        Ok(())
    }

    fn save(&self) -> Result<(), CliError> {
        if let (true, Some(path)) = (self.dirty, &self.path) {
            std::fs::write(path, self.table.to_csv()).map_err(|e| CliError::io(path, e))?;
        }
        Ok(())
    }
}

fn read_table(path: &Path) -> Result<CriticalValueTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    CriticalValueTable::from_csv(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn check_reps(reps: usize, allow_small: bool) -> Result<(), CliError> {
    if reps < MIN_TABLE_REPS && !allow_small {
        return Err(CliError::config(format!(
            "{reps} replications is below the floor of {MIN_TABLE_REPS}; pass --allow-small to override"
        )));
    }
    Ok(())
}

fn test_levels(f: &Flags) -> Vec<f64> {
    let mut levels = vec![0.95, 0.99, 1.0 - alpha(f)];
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    levels
}

fn series_header(f: &Flags, x: &FunctionalSeries) -> Result<serde_json::Map<String, Value>, CliError> {
    let rule = h_rule(f);
    let mut m = serde_json::Map::new();
    m.insert("input".into(), json!(f.input.as_ref().map(|p| p.display().to_string())));
    m.insert("T".into(), json!(x.len()));
    m.insert("p".into(), json!(x.dim()));
    m.insert("mode".into(), json!(mode(f).as_str()));
    m.insert("kernel".into(), json!(kernel(f).family.to_string()));
    m.insert("h_rule".into(), json!(rule.label()));
    m.insert("bandwidth".into(), json!(rule.bandwidth(x.len())?));
    m.insert("k_policy".into(), json!(k_policy(f)));
    m.insert("alpha".into(), json!(alpha(f)));
    Ok(m)
}

/// Sequential dimension tests, reporting at least `--rows` values of φ0.
pub fn test_dim(f: &Flags) -> Result<(), CliError> {
    let x = load_series(required(&f.input, "input")?)?;
    let mut store = CvStore::open(f)?;
    let (spec, mode, kp, alpha) = (kernel(f), mode(f), k_policy(f), alpha(f));
    let h = h_rule(f).bandwidth(x.len())?;
    let p = x.dim();
    if kp > p {
        return Err(Error::KOutOfRange { k: kp, phi0: 0, max: p }.into());
    }
    let cap = f.phi_cap.unwrap_or_else(|| default_phi_cap(p, x.len())).min(p - kp);
    let min_rows = f.rows.unwrap_or(DEFAULT_REPORT_ROWS);
    let levels = test_levels(f);

    let mut rows: Vec<TestOutcome> = Vec::new();
    let mut phi_hat = None;
    for phi0 in 0..=cap {
        if phi_hat.is_some() && phi0 >= min_rows {
            break;
        }
        let key = CvKey { mode, dim_w: kp, dim_b: phi0 };
        store.ensure(key, &levels)?;
        let outcome = dimension_test(&x, phi0, phi0 + kp, &spec, h, mode, &store.table)?;
        if phi_hat.is_none() && !outcome.rejects(alpha)? {
            phi_hat = Some(phi0);
        }
        rows.push(outcome);
    }
    store.save()?;
    let cap_reached = phi_hat.is_none();

    match f.format.unwrap_or(Format::Json) {
        Format::Csv => emit(f, &outcomes_csv(&rows)),
        Format::Json => {
            let mut report = serde_json::Map::new();
            report.insert("command".into(), json!("test-dim"));
            report.extend(series_header(f, &x)?);
            report.insert("phi_cap".into(), json!(cap));
            report.insert("phi_hat".into(), json!(phi_hat.unwrap_or(cap)));
            report.insert("cap_reached".into(), json!(cap_reached));
            report.insert("rows".into(), Value::Array(rows.iter().map(outcome_json).collect()));
            emit_json(f, &Value::Object(report))
        }
    }
}

fn single_outcome_report(f: &Flags, command: &str, x: &FunctionalSeries, dim_m: usize, o: &TestOutcome) -> Result<(), CliError> {
    match f.format.unwrap_or(Format::Json) {
        Format::Csv => emit(f, &outcomes_csv(std::slice::from_ref(o))),
        Format::Json => {
            let mut report = serde_json::Map::new();
            report.insert("command".into(), json!(command));
            report.extend(series_header(f, x)?);
            report.insert("dim_m".into(), json!(dim_m));
            report.insert("result".into(), outcome_json(o));
            emit_json(f, &Value::Object(report))
        }
    }
}

/// `H0: span(M) ⊂ H^N` given `dim(H^N) = phi`.
pub fn test_subspace_in(f: &Flags) -> Result<(), CliError> {
    let x = load_series(required(&f.input, "input")?)?;
    let m = load_subspace(required(&f.subspace, "subspace")?, x.grid())?;
    let phi = *required(&f.phi, "phi")?;
    if m.len() > phi {
        return Err(Error::DimMismatch(format!("subspace has dimension {} but phi is {phi}", m.len())).into());
    }
    let phi0 = phi - m.len();
    let k = phi0 + k_policy(f);
    let mut store = CvStore::open(f)?;
    store.ensure(CvKey { mode: mode(f), dim_w: k - phi0, dim_b: phi0 }, &test_levels(f))?;
    let h = h_rule(f).bandwidth(x.len())?;
    let o = subspace_in_attractor_test(&x, &m, phi, k, &kernel(f), h, mode(f), &store.table)?;
    store.save()?;
    single_outcome_report(f, "test-subspace-in", &x, m.len(), &o)
}

/// `H0: H^N ⊂ span(M)`.
pub fn test_subspace_contains(f: &Flags) -> Result<(), CliError> {
    let x = load_series(required(&f.input, "input")?)?;
    let m = load_subspace(required(&f.subspace, "subspace")?, x.grid())?;
    let k = k_policy(f);
    let mut store = CvStore::open(f)?;
    store.ensure(CvKey { mode: mode(f), dim_w: k, dim_b: 0 }, &test_levels(f))?;
    let h = h_rule(f).bandwidth(x.len())?;
    let o = attractor_in_subspace_test(&x, &m, k, &kernel(f), h, mode(f), &store.table)?;
    store.save()?;
    single_outcome_report(f, "test-subspace-contains", &x, m.len(), &o)
}

/// Modified FPCA estimate of the attractor space at a given dimension.
pub fn estimate(f: &Flags) -> Result<(), CliError> {
    let x = load_series(required(&f.input, "input")?)?;
    let phi = *required(&f.phi, "phi")?;
    let h = h_rule(f).bandwidth(x.len())?;
    let fit = modified_fpca(&x, phi, &kernel(f), h, mode(f))?;
    let ordinary = ordinary_fpca(&x, phi, mode(f))?;
    let curves = |vs: Vec<GridFunction>| -> Vec<Vec<f64>> { vs.into_iter().map(GridFunction::into_values).collect() };
    let trend: Vec<Vec<f64>> = curves((0..phi).map(|j| fit.spectrum.eigenvector(j)).collect());
    match f.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_wide(&mut buf, x.grid().points(), &trend).map_err(|e| CliError::io("<buffer>", e))?;
            emit(f, &String::from_utf8(buf).expect("ASCII output"))
        }
        Format::Json => {
            let shown = (phi + 5).min(x.dim());
            let mut report = serde_json::Map::new();
            report.insert("command".into(), json!("estimate"));
            report.extend(series_header(f, &x)?);
            report.insert("phi".into(), json!(phi));
            report.insert("eigenvalues".into(), json!(&fit.spectrum.eigenvalues()[..shown]));
            report.insert("ordinary_eigenvalues".into(), json!(&ordinary.spectrum.eigenvalues()[..shown]));
            report.insert("grid".into(), json!(x.grid().points()));
            report.insert("trend_basis".into(), json!(trend));
            report.insert(
                "ordinary_trend_basis".into(),
                json!(curves((0..phi).map(|j| ordinary.spectrum.eigenvector(j)).collect())),
            );
            report.insert("asymmetry".into(), json!(fit.asymmetry));
            emit_json(f, &Value::Object(report))
        }
    }
}

/// Tabulate critical values for `φ0 = 0..=max_phi0` and `K = φ0 + k_policy`.
pub fn simulate_cv(f: &Flags) -> Result<(), CliError> {
    let reps = f.reps.unwrap_or(DEFAULT_REPS);
    check_reps(reps, f.allow_small)?;
    let ngrid = f.ngrid.unwrap_or(DEFAULT_NGRID);
    let levels = f.levels.clone().unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let kp = k_policy(f);
    let dims: Vec<(usize, usize)> = (0..=f.max_phi0.unwrap_or(DEFAULT_MAX_PHI0)).map(|b| (kp, b)).collect();
    let table = critical_values(&dims, mode(f), &levels, reps, ngrid, f.seed.unwrap_or(0))?;
    if let Some(path) = &f.cv_cache {
        // keep earlier entries for other keys
        let mut merged = if path.exists() { read_table(path)? } else { CriticalValueTable::new() };
        merged.merge(&table);
        std::fs::write(path, merged.to_csv()).map_err(|e| CliError::io(path, e))?;
    }
    match f.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(f, &table.to_csv()),
        Format::Json => {
            let entries: Vec<Value> = table
                .keys()
                .flat_map(|k| {
                    table.entries(k).iter().map(move |e| {
                        json!({
                            "mode": k.mode.as_str(), "dim_w": k.dim_w, "dim_b": k.dim_b,
                            "level": e.level, "quantile": e.quantile,
                            "reps": e.provenance.reps, "ngrid": e.provenance.ngrid, "seed": e.provenance.seed,
                        })
                    })
                })
                .collect();
            emit_json(
                f,
                &json!({ "command": "simulate-cv", "gram_retries": table.gram_retries, "entries": entries }),
            )
        }
    }
}

/// Rejection frequencies over a sweep of `(T, φ0, φ - φ0)`.
pub fn montecarlo(f: &Flags) -> Result<(), CliError> {
    let (beta_min, beta_max) = parse_beta(f.beta.as_deref().unwrap_or("lower"))?;
    let phi0s = f.phi0.clone().unwrap_or_else(|| (0..=4).collect());
    let offsets = f.offset.clone().unwrap_or_else(|| vec![0, 1]);
    let sizes = f.sample_size.clone().unwrap_or_else(|| vec![250]);
    let n_reps = f.n_reps.unwrap_or(DEFAULT_MC_REPS);
    let seed = f.seed.unwrap_or(0);
    let kp = k_policy(f);

    // validate the whole sweep before simulating anything
    let mut cells = Vec::new();
    for &t in &sizes {
        for &phi0 in &phi0s {
            for &off in &offsets {
                let mut cfg = DgpConfig::new(phi0 + off, t).with_mode(mode(f)).with_seed(seed);
                cfg.beta_min = beta_min;
                cfg.beta_max = beta_max;
                cfg.smoothing = f.smoothing;
                cfg.validate()?;
                cells.push((cfg, phi0));
            }
        }
    }
    let mut store = CvStore::open(f)?;
    let levels = [1.0 - alpha(f)];
    for &phi0 in &phi0s {
        store.ensure(CvKey { mode: mode(f), dim_w: kp, dim_b: phi0 }, &levels)?;
    }
    store.save()?;

    let mut rows = Vec::new();
    for (cfg, phi0) in cells {
        let design = TestDesign {
            phi0,
            k_policy: kp,
            kernel: kernel(f),
            h_rule: h_rule(f),
            mode: mode(f),
            alpha: alpha(f),
            n_reps,
        };
        rows.push(rejection_experiment(&cfg, &design, &store.table)?);
    }
    match f.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut text = String::from(EXPERIMENT_HEADER);
            text.push('\n');
            for r in &rows {
                text.push_str(&r.to_csv_row());
                text.push('\n');
            }
            emit(f, &text)
        }
        Format::Json => emit_json(f, &json!({ "command": "montecarlo", "rows": rows })),
    }
}

/// Apply a pointwise or density transform to every curve of a wide file.
pub fn transform(f: &Flags) -> Result<(), CliError> {
    let kind = *required(&f.kind, "kind")?;
    let table = load_wide(required(&f.input, "input")?)?;
    let grid = Grid::new(table.grid.clone())?;
    let out: Vec<Vec<f64>> = table
        .rows
        .into_iter()
        .map(|row| -> Result<Vec<f64>, CliError> {
            let g = grid.clone();
            Ok(match kind {
                TransformKind::Logit => logit_curve(&GridFunction::new(g, row)?)?.into_values(),
                TransformKind::Clr => clr_transform(&DensityFunction::normalized(g, row)?)?.into_values(),
                TransformKind::InverseClr => inverse_clr(&GridFunction::new(g, row)?)?.values().to_vec(),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut buf = Vec::new();
    write_wide(&mut buf, &table.grid, &out).map_err(|e| CliError::io("<buffer>", e))?;
    emit(f, &String::from_utf8(buf).expect("ASCII output"))
}
