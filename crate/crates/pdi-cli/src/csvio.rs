//! CSV ingestion and emission.
//!
//! The data schema is a header row with columns `y`, `a`, `t_lo`, `t_hi`
//! (the literals `inf` / `-inf` are allowed), then covariates `x1..xd`.
//! Covariate-only files (for `predict` and `oracle`) need just `x1..xd`.

use std::fs;
use std::path::Path;

use pdi_core::{Dataset, Observation};

use crate::CliError;

pub struct Columns {
    pub y: Option<usize>,
    pub a: Option<usize>,
    pub t_lo: Option<usize>,
    pub t_hi: Option<usize>,
    /// Indices of x1..xd in order.
    pub x: Vec<usize>,
}

fn parse_header(line: &str) -> Result<Columns, CliError> {
    let names: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
    let find = |name: &str| names.iter().position(|n| n == name);
    let mut x = Vec::new();
    for d in 1.. {
        match find(&format!("x{d}")) {
            Some(i) => x.push(i),
            None => break,
        }
    }
    if x.is_empty() {
        return Err(CliError::Schema("no covariate columns x1..xd found".into()));
    }
    Ok(Columns {
        y: find("y"),
        a: find("a"),
        t_lo: find("t_lo"),
        t_hi: find("t_hi"),
        x,
    })
}

fn parse_value(field: &str, row: usize, col: &str) -> Result<f64, CliError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| CliError::Schema(format!("row {row}: cannot parse `{field}` in column {col}")))
}

fn read_rows(path: &Path) -> Result<(Columns, Vec<Vec<f64>>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Schema("empty file".into()))?;
    let cols = parse_header(header)?;
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(CliError::Schema(format!(
                "row {}: expected {width} fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(width);
        for (c, f) in fields.iter().enumerate() {
            row.push(parse_value(f, i + 1, &format!("#{c}"))?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Schema("no data rows".into()));
    }
    Ok((cols, rows))
}

/// Reads a full labeled dataset (y, a, t_lo, t_hi, x1..xd).
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let (cols, rows) = read_rows(path)?;
    let (y, a, t_lo, t_hi) = match (cols.y, cols.a, cols.t_lo, cols.t_hi) {
        (Some(y), Some(a), Some(l), Some(h)) => (y, a, l, h),
        _ => {
            return Err(CliError::Schema(
                "labeled data needs columns y, a, t_lo, t_hi".into(),
            ))
        }
    };
    let obs: Vec<Observation> = rows
        .iter()
        .map(|row| {
            let x: Vec<f64> = cols.x.iter().map(|&i| row[i]).collect();
            Observation::new(row[y], row[a], x, row[t_lo], row[t_hi])
        })
        .collect();
    Dataset::new(obs).map_err(CliError::Core)
}

/// Reads covariate vectors only (x1..xd).
pub fn read_covariates(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let (cols, rows) = read_rows(path)?;
    Ok(rows
        .iter()
        .map(|row| cols.x.iter().map(|&i| row[i]).collect())
        .collect())
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() && !parent.exists() {
            return Err(CliError::Io(format!(
                "output directory {} does not exist",
                parent.display()
            )));
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// 17-significant-digit decimal rendering: round-trips f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.16e}")
}
