//! Command-line harness.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bundle::{solve, SolveStatus};
use crate::io::{self, ReferenceFile, ReportFile, SweepPoint};
use crate::model::AlphaStrategy;
use crate::reference::{solve_reference, ReferenceConfig};
use crate::registry::{self, Entry, Overrides};
use crate::twostage::{exact_demo, smoothing_demo, TieRule};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "simbundle", version, about = "Simplified bundle method for two-stage problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a built-in problem.
    Solve(SolveArgs),
    /// Tabulate a smoothing demo over a grid of x for several μ.
    Sweep(SweepArgs),
    /// Compute a brute-force reference from the joint problem.
    Reference(ReferenceArgs),
}

#[derive(Debug, Args, Default)]
pub struct ProblemArgs {
    /// Problem name; see `registry::PROBLEMS`.
    #[arg(long)]
    pub problem: Option<String>,
    /// Run spec JSON; explicit flags take precedence.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub alpha_strategy: Option<AlphaStrategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Tie rule for the example recourse: largest-y3 or smallest-y3.
    #[arg(long)]
    pub tie: Option<TieRule>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Reference JSON from the `reference` command.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Skip computing a reference for the gap column.
    #[arg(long)]
    pub no_reference: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated μ values.
    #[arg(long = "mus", value_delimiter = ',', default_value = "1,10,100")]
    pub mus: Vec<f64>,
    /// Grid `START:STOP:STEP`, inclusive of STOP up to rounding.
    #[arg(long, default_value = "0:1.5:0.01", allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 256)]
    pub starts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolved problem name and overrides.
fn resolve(p: &ProblemArgs) -> Result<(String, Overrides, Option<PathBuf>, Option<PathBuf>)> {
    let (mut name, mut o, mut trace, mut report) = (None, Overrides::default(), None, None);
    if let Some(path) = &p.spec {
        let spec = io::parse_run_spec(&std::fs::read_to_string(path)?)?;
        name = Some(spec.problem);
        o = spec.overrides;
        trace = spec.trace;
        report = spec.report;
    }
    if let Some(n) = &p.problem {
        name = Some(n.clone());
    }
    let name = name.ok_or_else(|| Error::InvalidConfig("--problem or --spec is required".into()))?;
    if !registry::is_known(&name) {
        return Err(Error::UnknownProblem(name));
    }
    macro_rules! take {
        ($($f:ident),*) => { $( if p.$f.is_some() { o.$f = p.$f; } )* };
    }
    take!(mu, alpha0, eps, max_iters, alpha_strategy, seed, k, tie, a, b);
    Ok((name, o, trace, report))
}

/// Parse `START:STOP:STEP` into grid points.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("grid '{text}' is not START:STOP:STEP")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad grid number '{s}'"))))
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(Error::InvalidConfig(format!("empty grid '{text}'")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 10_000_000 {
        return Err(Error::InvalidConfig(format!("grid '{text}' has too many points")));
    }
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let (name, o, spec_trace, spec_report) = resolve(&a.problem)?;
    let inst = registry::instance(&name, &o)?;
    let report = solve(&inst.problem, &inst.config)?;
    let reference = if let Some(path) = &a.reference {
        let r = io::parse_reference(&std::fs::read_to_string(path)?)?;
        if r.problem != name {
            return Err(Error::InvalidConfig(format!("reference is for '{}', not '{name}'", r.problem)));
        }
        Some(r.objective)
    } else if a.no_reference {
        None
    } else if let Some(ext) = &inst.extensive {
        Some(solve_reference(ext.as_ref(), &ReferenceConfig::default())?.objective)
    } else {
        None
    };
    if let Some(path) = a.trace.as_ref().or(spec_trace.as_ref()) {
        io::write_trace(BufWriter::new(File::create(path)?), &report.trace)?;
    }
    let file = ReportFile::new(&name, &report, reference);
    if let Some(path) = a.report.as_ref().or(spec_report.as_ref()) {
        io::write_json(path, &file)?;
    }
    println!(
        "{name}: status={} iterations={} objective={:e} gap={}",
        file.status,
        file.iterations,
        file.objective,
        file.reference_gap.map_or("n/a".to_string(), |g| format!("{g:e}"))
    );
    Ok(match report.status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIters => 2,
        SolveStatus::RestorationCriticalPoint => 3,
        SolveStatus::OracleFailure => 1,
    })
}

fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let (name, o, _, _) = resolve(&a.problem)?;
    let demo = match registry::build(&name, &o)? {
        Entry::Demo(d) => d,
        Entry::Solve(_) => return Err(Error::InvalidConfig(format!("'{name}' is not a smoothing demo"))),
    };
    let xs = parse_grid(&a.grid)?;
    if a.mus.is_empty() {
        return Err(Error::InvalidConfig("no μ values".into()));
    }
    let mut points = Vec::with_capacity(xs.len() * a.mus.len());
    for &mu in &a.mus {
        for &x in &xs {
            points.push(SweepPoint {
                mu,
                x,
                r_mu: smoothing_demo(demo, x, mu)?,
                r_exact: exact_demo(demo, x),
            });
        }
    }
    io::write_sweep(BufWriter::new(File::create(&a.out)?), demo.name(), &points)?;
    println!("{name}: wrote {} points to {}", points.len(), a.out.display());
    Ok(0)
}

fn cmd_reference(a: &ReferenceArgs) -> Result<i32> {
    let (name, o, _, _) = resolve(&a.problem)?;
    let inst = registry::instance(&name, &o)?;
    let ext = inst
        .extensive
        .ok_or_else(|| Error::InvalidConfig(format!("'{name}' has no extensive form")))?;
    let cfg = ReferenceConfig {
        starts: a.starts,
        seed: o.seed.unwrap_or(ReferenceConfig::default().seed),
        ..Default::default()
    };
    let r = solve_reference(ext.as_ref(), &cfg)?;
    io::write_json(&a.out, &ReferenceFile::new(&name, &r, cfg.seed))?;
    println!("{name}: reference objective={:e}", r.objective);
    Ok(0)
}

pub fn parse_args<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args)
}

/// Run with the given argument vector and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Reference(a) => cmd_reference(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0:1.5:0.01").unwrap().len(), 151);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
    }
}
