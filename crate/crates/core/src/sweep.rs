//! Parameter sweeps: a cartesian grid of scenario overrides, each cell run
//! for several seeds, summarized into one table row per cell.

use std::fmt::Write as _;

use crate::error::SweepError;
use crate::metrics::median;
use crate::scenario::Scenario;
use crate::sim::{RunOptions, Simulation};

/// One grid dimension: a dotted scenario key and the values it takes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl SweepAxis {
    /// Parse `key=v1,v2,...`.
    pub fn parse(s: &str) -> Result<SweepAxis, SweepError> {
        let (key, vals) = s
            .split_once('=')
            .ok_or_else(|| SweepError::BadAxis(s.to_string()))?;
        let key = key.trim();
        let values: Vec<String> = vals
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if key.is_empty() || values.is_empty() {
            return Err(SweepError::BadAxis(s.to_string()));
        }
        Ok(SweepAxis {
            key: key.to_string(),
            values,
        })
    }
}

/// Every combination of axis values, first axis varying slowest.
pub fn grid(axes: &[SweepAxis]) -> Vec<Vec<(String, String)>> {
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                axis.values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((axis.key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub params: Vec<(String, String)>,
    pub runs: usize,
    pub median_duration_s: Option<f64>,
    pub median_passes: Option<f64>,
    /// Failed hand-overs over attempted ones, pooled across runs.
    pub failed_rate: f64,
    pub violations: usize,
    pub capped: usize,
    /// Set when the overrides did not yield a valid scenario.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axes: Vec<String>,
    pub cells: Vec<CellResult>,
}

/// Run `reps` seeds (`base.seed + rep`) for every grid cell.
pub fn run_sweep(
    base: &Scenario,
    axes: &[SweepAxis],
    reps: usize,
) -> Result<SweepReport, SweepError> {
    if axes.is_empty() || axes.iter().any(|a| a.values.is_empty()) {
        return Err(SweepError::EmptyGrid);
    }
    if reps == 0 {
        return Err(SweepError::NoRepetitions);
    }
    base.validate()?;
    let mut cells = Vec::new();
    for params in grid(axes) {
        let mut sc = base.clone();
        let applied = params
            .iter()
            .try_for_each(|(k, v)| sc.set_param(k, v))
            .and_then(|()| sc.validate());
        if let Err(e) = applied {
            cells.push(CellResult {
                params,
                runs: 0,
                median_duration_s: None,
                median_passes: None,
                failed_rate: 0.0,
                violations: 0,
                capped: 0,
                error: Some(e.to_string()),
            });
            continue;
        }
        let mut durations = Vec::with_capacity(reps);
        let mut passes = Vec::with_capacity(reps);
        let (mut failed, mut attempted, mut violations, mut capped) = (0u64, 0u64, 0usize, 0usize);
        for rep in 0..reps {
            let mut s = sc.clone();
            s.seed = base.seed.wrapping_add(rep as u64);
            let a = Simulation::new(s, RunOptions::lean()).run();
            durations.push(a.summary.duration_ms as f64 / 1000.0);
            passes.push(a.summary.passes as f64);
            failed += a.summary.failed_actions;
            attempted += a.summary.failed_actions + a.summary.passes;
            violations += a.oracle.violations.len();
            capped += usize::from(a.summary.ended_by_cap);
        }
        cells.push(CellResult {
            params,
            runs: reps,
            median_duration_s: median(&durations),
            median_passes: median(&passes),
            failed_rate: if attempted == 0 {
                0.0
            } else {
                failed as f64 / attempted as f64
            },
            violations,
            capped,
            error: None,
        });
    }
    Ok(SweepReport {
        axes: axes.iter().map(|a| a.key.clone()).collect(),
        cells,
    })
}

impl SweepReport {
    /// Render as delimited text with a header row. `sep` is `,` or `\t`.
    pub fn to_table(&self, sep: char) -> String {
        let mut out = String::new();
        let mut header: Vec<&str> = self.axes.iter().map(String::as_str).collect();
        header.extend([
            "runs",
            "median_duration_s",
            "median_passes",
            "failed_rate",
            "violations",
            "capped",
            "error",
        ]);
        out.push_str(&header.join(&sep.to_string()));
        out.push('\n');
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.3}"));
        for c in &self.cells {
            let mut row: Vec<String> = c.params.iter().map(|(_, v)| v.clone()).collect();
            row.extend([
                c.runs.to_string(),
                opt(c.median_duration_s),
                opt(c.median_passes),
                format!("{:.4}", c.failed_rate),
                c.violations.to_string(),
                c.capped.to_string(),
                c.error
                    .clone()
                    .unwrap_or_default()
                    .replace([sep, '\n'], " "),
            ]);
            writeln!(out, "{}", row.join(&sep.to_string())).expect("writing to a String");
        }
        out
    }
}
