//! Wide-format curve files: the first row holds the grid abscissae, every
//! following row one curve evaluated on that grid.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use fmfpca_core::{gram_matrix_condition, FunctionalSeries, Grid, GridFunction};

use crate::error::{CliError, LoadError};

/// Grid abscissae and curve rows as read from text.
#[derive(Debug, Clone, PartialEq)]
pub struct WideTable {
    pub grid: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_wide(text: &str) -> Result<WideTable, LoadError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut lines: Vec<(usize, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| LoadError::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            col: 0,
            text: e.to_string(),
        })?;
        let row = record.position().map_or(lines.len() + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| LoadError::Parse {
                    row,
                    col: col + 1,
                    text: field.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        lines.push((row, values));
    }
    let mut it = lines.into_iter();
    let (_, grid) = it.next().ok_or(LoadError::EmptyFile)?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LoadError::NonMonotoneGrid);
    }
    let mut rows = Vec::new();
    for (row, values) in it {
        if values.len() != grid.len() {
            return Err(LoadError::RaggedRows { row, got: values.len(), expected: grid.len() });
        }
        rows.push(values);
    }
    Ok(WideTable { grid, rows })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_wide(path: &Path) -> Result<WideTable, CliError> {
    parse_wide(&read_text(path)?).map_err(|source| CliError::Load { path: path.into(), source })
}

fn to_series(path: &Path, table: WideTable) -> Result<FunctionalSeries, CliError> {
    if table.rows.is_empty() {
        return Err(CliError::Load { path: path.into(), source: LoadError::NoObservations });
    }
    let grid = Grid::new(table.grid)?;
    Ok(FunctionalSeries::from_rows(grid, &table.rows)?)
}

/// Load a functional time series, one observation per data row.
pub fn load_series(path: &Path) -> Result<FunctionalSeries, CliError> {
    to_series(path, load_wide(path)?)
}

/// Largest accepted condition number of the Gram matrix of subspace curves.
pub const MAX_GRAM_CONDITION: f64 = 1e6;

/// Load curves spanning a subspace on `grid` and orthonormalize them.
pub fn load_subspace(path: &Path, grid: &Arc<Grid>) -> Result<Vec<GridFunction>, CliError> {
    let table = load_wide(path)?;
    if table.grid.len() != grid.len()
        || table.grid.iter().zip(grid.points()).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
    {
        return Err(CliError::config(format!(
            "{}: subspace curves must use the grid of the input series",
            path.display()
        )));
    }
    if table.rows.is_empty() {
        return Err(CliError::Load { path: path.into(), source: LoadError::NoObservations });
    }
    let curves = table
        .rows
        .into_iter()
        .map(|r| GridFunction::new(grid.clone(), r))
        .collect::<Result<Vec<_>, _>>()?;
    let condition = gram_matrix_condition(&curves)?;
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(CliError::config(format!(
            "{}: subspace curves are nearly dependent (Gram condition number {condition:.3e})",
            path.display()
        )));
    }
    Ok(fmfpca_core::orthonormalize(&curves)?)
}

/// Write a grid row followed by one row per curve.
pub fn write_wide(out: &mut impl Write, grid: &[f64], rows: &[Vec<f64>]) -> std::io::Result<()> {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",");
    writeln!(out, "{}", join(grid))?;
    for r in rows {
        writeln!(out, "{}", join(r))?;
    }
    Ok(())
}
