//! Plain-text numeric tables: CSV series and whitespace-separated columns.

use std::fmt::Write as _;
use std::path::Path;

use tdoc_core::target::PathTrajectory;

use crate::error::{Error, Result};

/// Writes a CSV with a header row. Floats use Rust's shortest round-trip
/// formatting, so the files are deterministic and lossless.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            write!(text, "{v:e}").expect("writing to a String");
        }
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads rows of numbers separated by commas and/or whitespace. Blank
/// lines, `#` comments and a leading non-numeric header are skipped.
pub fn read_columns(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_columns(&text).map_err(|m| Error::format(path, m))
}

fn parse_columns(text: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|s| s.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(format!(
                            "line {}: {} columns, expected {}",
                            line_no + 1,
                            row.len(),
                            first.len()
                        ));
                    }
                }
                rows.push(row);
            }
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(format!("line {}: {e}", line_no + 1)),
        }
    }
    if rows.is_empty() {
        return Err("no numeric rows".into());
    }
    Ok(rows)
}

/// Two-column `t r(t)` file as a path for the moving-density target.
pub fn read_path(path: &Path) -> Result<PathTrajectory> {
    let rows = read_columns(path)?;
    if rows[0].len() != 2 {
        return Err(Error::format(path, format!("expected 2 columns, found {}", rows[0].len())));
    }
    let (times, positions) = rows.iter().map(|r| (r[0], r[1])).unzip();
    PathTrajectory::new(times, positions).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_path(path: &Path, trajectory: &PathTrajectory) -> Result<()> {
    let mut text = String::from("# t r\n");
    for (t, r) in trajectory.times().iter().zip(trajectory.positions()) {
        writeln!(text, "{t:e} {r:e}").expect("writing to a String");
    }
    write_text(path, &text)
}
