//! Report JSON and the CSV tables written next to it.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::problem::Grid;
use crate::solvers::Scheme;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GridMeta {
    pub nx: usize,
    pub nt: usize,
    pub n_steps: usize,
    pub dx: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub scheme: Scheme,
    pub coarse: bool,
}

impl GridMeta {
    pub fn new(grid: &Grid, scheme: Scheme, coarse: bool) -> Self {
        let steps = (0..grid.n_steps()).map(|k| grid.step(k));
        GridMeta {
            nx: grid.nx,
            nt: grid.nt,
            n_steps: grid.n_steps(),
            dx: grid.dx,
            dt_min: steps.clone().fold(f64::INFINITY, f64::min),
            dt_max: steps.fold(0.0, f64::max),
            scheme,
            coarse,
        }
    }
}

/// One check. A disabled check serializes as `{}`.
#[derive(Debug, Clone, Serialize)]
pub struct Section<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridMeta>,
    /// Set when the check could not be carried out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<T>,
}

impl<T> Default for Section<T> {
    fn default() -> Self {
        Section { passed: None, worst_residual: None, tolerance: None, grid: None, error: None, details: None }
    }
}

impl<T> Section<T> {
    pub fn done(passed: bool, worst_residual: f64, tolerance: f64, grid: &GridMeta, details: T) -> Self {
        Section {
            passed: Some(passed),
            worst_residual: Some(worst_residual),
            tolerance: Some(tolerance),
            grid: Some(grid.clone()),
            error: None,
            details: Some(details),
        }
    }

    pub fn failed(error: String, grid: &GridMeta) -> Self {
        Section { passed: Some(false), grid: Some(grid.clone()), error: Some(error), ..Default::default() }
    }

    pub fn enabled(&self) -> bool {
        self.passed.is_some()
    }
}

/// Overall outcome, mapped onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    CheckFailed,
    NumericalFailure,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::CheckFailed => "check_failed",
            Status::NumericalFailure => "numerical_failure",
        })
    }
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 1,
            Status::NumericalFailure => 3,
        }
    }

    /// Combines section outcomes: any error wins, then any failure.
    pub fn combine(sections: &[(Option<bool>, bool)]) -> Status {
        if sections.iter().any(|(_, err)| *err) {
            Status::NumericalFailure
        } else if sections.iter().any(|(p, _)| *p == Some(false)) {
            Status::CheckFailed
        } else {
            Status::Pass
        }
    }
}

/// A CSV file: header plus already formatted rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_header(name: &str, header: Vec<String>) -> Self {
        Table { name: name.to_string(), header, rows: Vec::new() }
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| v.to_string()).collect());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(&self.name))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes `report.json` and every table into `dir`, creating it if needed.
pub fn write_outputs<R: Serialize>(dir: &Path, report: &R, tables: &[Table]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    for t in tables {
        t.write(dir)?;
    }
    Ok(())
}
