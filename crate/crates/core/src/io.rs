//! Path CSV files and flat `key=value` records.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::grid::{Path, SampledFn, TimeGrid};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_text(grid: TimeGrid, dim: usize, values: &[f64]) -> String {
    let mut out = String::from("t");
    for c in 1..=dim {
        let _ = write!(out, ",x{c}");
    }
    out.push('\n');
    for (i, row) in values.chunks_exact(dim).enumerate() {
        out.push_str(&num(grid.node(i)));
        for v in row {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

/// CSV text with header `t,x1,...,xd` and 17 significant digits.
pub fn path_to_csv(p: &Path) -> String {
    csv_text(p.grid(), p.dim(), p.values())
}

pub fn sampled_to_csv(f: &SampledFn) -> String {
    csv_text(f.grid(), f.dim(), f.values())
}

pub fn write_path(file: impl AsRef<FsPath>, p: &Path) -> Result<()> {
    fs::write(file, path_to_csv(p))?;
    Ok(())
}

pub fn write_sampled(file: impl AsRef<FsPath>, f: &SampledFn) -> Result<()> {
    fs::write(file, sampled_to_csv(f))?;
    Ok(())
}

/// Parses the CSV format written by [`path_to_csv`]. The node column must
/// describe a uniform grid on `[0, 1]`.
pub fn path_from_csv(text: &str) -> Result<Path> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty path file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(Error::Parse(format!("bad path header '{header}'")));
    }
    let dim = cols.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                ln + 2,
                fields.len(),
                dim + 1
            )));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let parsed = parsed.map_err(|e| Error::Parse(format!("row {}: {e}", ln + 2)))?;
        times.push(parsed[0]);
        values.extend_from_slice(&parsed[1..]);
    }
    if times.len() < 3 {
        return Err(Error::Parse("a path needs at least 3 nodes".into()));
    }
    let grid = TimeGrid::new(times.len() - 1)?;
    for (i, t) in times.iter().enumerate() {
        if (t - grid.node(i)).abs() > 1e-9 {
            return Err(Error::Parse(format!(
                "node {i} is at t = {t}, expected a uniform grid on [0, 1]"
            )));
        }
    }
    Path::new(grid, dim, values)
}

pub fn read_path(file: impl AsRef<FsPath>) -> Result<Path> {
    path_from_csv(&fs::read_to_string(file)?)
}

/// Flat `key=value` record, one pair per line, in the given order.
pub fn record_text<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{}={}", k.as_ref(), v.as_ref());
    }
    out
}

pub fn write_record<K: AsRef<str>, V: AsRef<str>>(
    file: impl AsRef<FsPath>,
    pairs: &[(K, V)],
) -> Result<()> {
    fs::write(file, record_text(pairs))?;
    Ok(())
}

/// Parses `key=value` lines; blank lines and lines starting with `#` are
/// skipped. Later keys override earlier ones.
pub fn parse_record(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", ln + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", ln + 1)));
        }
        out.retain(|(key, _)| *key != k);
        out.push((k, v));
    }
    Ok(out)
}
