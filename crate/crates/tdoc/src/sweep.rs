//! Parameter sweeps: one run per value on a worker pool, then a summary.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::artifacts::{outcome_name, run_experiment, RunArtifacts};
use crate::config::{Axis, ExperimentConfig};
use crate::error::{Error, Result};
use crate::table;

/// One row of `summary.csv`.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub dir: PathBuf,
    pub result: std::result::Result<RunArtifacts, String>,
}

impl SweepRow {
    pub fn artifacts(&self) -> Option<&RunArtifacts> {
        self.result.as_ref().ok()
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
}

/// Directory of one sweep point, e.g. `alpha_0.2`.
pub fn point_dir(base: &ExperimentConfig, axis: Axis, value: f64) -> PathBuf {
    base.output.dir.join(format!("{axis}_{value}"))
}

/// Runs `base` once per value of `axis`. A failing run is recorded in its
/// row and the sweep carries on; the summary is written to
/// `<output.dir>/summary.csv`.
pub fn run_sweep(base: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<SweepSummary> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("sweep value {v} is not finite")));
    }
    // Config errors are reported before any run starts.
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            c.set_axis(axis, v)?;
            c.output.dir = point_dir(base, axis, v);
            c.output.resume = None;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = configs
        .into_par_iter()
        .zip(values.par_iter())
        .map(|(c, &value)| SweepRow {
            value,
            dir: c.output.dir.clone(),
            result: run_experiment(&c).map_err(|e| e.to_string()),
        })
        .collect();
    let summary = SweepSummary { axis, rows };
    std::fs::create_dir_all(&base.output.dir).map_err(|e| Error::io(&base.output.dir, e))?;
    table::write_text(&base.output.dir.join("summary.csv"), &summary.to_csv())?;
    Ok(summary)
}

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut text = format!("{},j1,j2,max_field,iterations,status\n", self.axis);
        for row in &self.rows {
            match &row.result {
                Ok(a) => {
                    let r = &a.final_record;
                    writeln!(
                        text,
                        "{:e},{:e},{:e},{:e},{},{}",
                        row.value,
                        r.j1,
                        r.j2,
                        r.max_field,
                        a.iterations,
                        outcome_name(a.outcome)
                    )
                }
                Err(e) => writeln!(text, "{:e},,,,,\"error: {}\"", row.value, e.replace('"', "'")),
            }
            .expect("writing to a String");
        }
        text
    }
}
