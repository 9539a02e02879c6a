//! File formats: trace and sweep CSV, report, run spec and reference JSON.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bundle::SolveReport;
use crate::model::{IterationRecord, StepKind, Vector};
use crate::reference::ReferenceSolution;
use crate::registry::{self, Overrides};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_HEADER: [&str; 12] = [
    "schema_version",
    "k",
    "step_kind",
    "r",
    "merit",
    "step_norm",
    "alpha",
    "beta",
    "theta",
    "pi",
    "kkt_residual",
    "oracle_calls",
];

fn sci(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trace<W: Write>(out: W, rows: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.k.to_string(),
            r.step_kind.as_str().to_string(),
            sci(r.r_value),
            sci(r.merit_value),
            sci(r.step_norm),
            sci(r.alpha),
            sci(r.beta),
            sci(r.theta),
            r.pi.map(sci).unwrap_or_default(),
            sci(r.kkt_residual),
            r.oracle_calls.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse(format!("row {line}: missing column {}", TRACE_HEADER[i])))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {line}: bad {} '{raw}'", TRACE_HEADER[i])))
}

/// Parse a trace written by [`write_trace`]. Iterates are not stored in the
/// file and come back empty.
pub fn read_trace<R: Read>(input: R) -> Result<Vec<IterationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::Parse("unexpected trace header".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != TRACE_HEADER.len() {
            return Err(Error::Parse(format!("row {line}: expected {} columns", TRACE_HEADER.len())));
        }
        let version: u32 = field(&rec, 0, line)?;
        if version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("row {line}: unsupported schema_version {version}")));
        }
        let kind: String = field(&rec, 2, line)?;
        let pi_raw = rec.get(9).unwrap_or("").trim();
        rows.push(IterationRecord {
            k: field(&rec, 1, line)?,
            step_kind: kind.parse::<StepKind>()?,
            r_value: field(&rec, 3, line)?,
            merit_value: field(&rec, 4, line)?,
            step_norm: field(&rec, 5, line)?,
            alpha: field(&rec, 6, line)?,
            beta: field(&rec, 7, line)?,
            theta: field(&rec, 8, line)?,
            pi: if pi_raw.is_empty() { None } else { Some(field(&rec, 9, line)?) },
            kkt_residual: field(&rec, 10, line)?,
            oracle_calls: field(&rec, 11, line)?,
            x: Vector::zeros(0),
            x_next: None,
            alpha_dd: 0.0,
        });
    }
    Ok(rows)
}

/// One point of a smoothing sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub mu: f64,
    pub x: f64,
    pub r_mu: f64,
    pub r_exact: f64,
}

pub fn write_sweep<W: Write>(out: W, demo: &str, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["schema_version", "demo", "mu", "x", "r_mu", "r_exact"])?;
    for p in points {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            demo.to_string(),
            sci(p.mu),
            sci(p.x),
            sci(p.r_mu),
            sci(p.r_exact),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON form of a solve report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub problem: String,
    pub status: String,
    pub iterations: usize,
    pub serious_steps: usize,
    pub rejected_steps: usize,
    pub objective: f64,
    pub final_x: Vec<f64>,
    pub constraint_violation: f64,
    /// Absent when no multipliers exist at the final point.
    pub kkt_residual: Option<f64>,
    pub final_alpha: f64,
    pub oracle_calls: usize,
    pub qp_solves: usize,
    pub restoration_calls: usize,
    pub delta_f: Option<f64>,
    pub message: Option<String>,
    pub reference_objective: Option<f64>,
    /// `|objective - reference| / |reference|`.
    pub reference_gap: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl ReportFile {
    pub fn new(problem: &str, r: &SolveReport, reference: Option<f64>) -> Self {
        let gap = reference.map(|f| (r.objective - f).abs() / f.abs().max(f64::MIN_POSITIVE));
        Self {
            schema_version: SCHEMA_VERSION,
            problem: problem.to_string(),
            status: r.status.as_str().to_string(),
            iterations: r.iterations,
            serious_steps: r.serious_steps,
            rejected_steps: r.rejected_steps,
            objective: r.objective,
            final_x: r.final_x.iter().cloned().collect(),
            constraint_violation: r.constraint_violation,
            kkt_residual: finite(r.kkt_residual),
            final_alpha: r.final_alpha,
            oracle_calls: r.oracle_calls,
            qp_solves: r.qp_solves,
            restoration_calls: r.restoration_calls,
            delta_f: r.delta_f.and_then(finite),
            message: r.message.clone(),
            reference_objective: reference,
            reference_gap: gap,
        }
    }
}

/// A serialized run request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub schema_version: u32,
    pub problem: String,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema_version {}", self.schema_version)));
        }
        if !registry::is_known(&self.problem) {
            return Err(Error::UnknownProblem(self.problem.clone()));
        }
        Ok(())
    }
}

pub fn parse_run_spec(text: &str) -> Result<RunSpec> {
    let spec: RunSpec = serde_json::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}

/// JSON form of a reference solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub schema_version: u32,
    pub problem: String,
    pub objective: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub starts: usize,
    pub converged_starts: usize,
    pub seed: u64,
}

impl ReferenceFile {
    pub fn new(problem: &str, r: &ReferenceSolution, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem: problem.to_string(),
            objective: r.objective,
            x: r.x.clone(),
            z: r.z.clone(),
            starts: r.starts,
            converged_starts: r.converged_starts,
            seed,
        }
    }
}

pub fn parse_reference(text: &str) -> Result<ReferenceFile> {
    let r: ReferenceFile = serde_json::from_str(text)?;
    if r.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!("unsupported schema_version {}", r.schema_version)));
    }
    if !r.objective.is_finite() || r.x.iter().chain(r.z.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Parse("reference contains non-finite values".into()));
    }
    if r.x.len() > r.z.len() {
        return Err(Error::Parse("first-stage part longer than the joint point".into()));
    }
    Ok(r)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
