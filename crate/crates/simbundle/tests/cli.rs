use std::path::Path;

use simbundle::cli::run;
use simbundle::io::{read_trace, ReportFile};
use simbundle::model::StepKind;

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("simbundle").chain(list.iter().copied()).map(String::from).collect()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn report(p: &str) -> ReportFile {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn exit_codes_follow_status() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(args(&["solve", "--problem", "qp-sanity", "--no-reference"])), 0);
    assert_eq!(
        run(args(&["solve", "--problem", "example1", "--max-iters", "2", "--no-reference"])),
        2
    );
    assert_eq!(run(args(&["solve", "--problem", "circle-fixed-point"])), 3);
    assert_eq!(run(args(&["solve", "--problem", "no-such-problem"])), 1);
    assert_eq!(run(args(&["solve"])), 1);
    assert_eq!(run(args(&["solve", "--problem", "example1", "--mu=-1"])), 1);
    assert_eq!(run(args(&["bogus"])), 1);
    assert_eq!(run(args(&["--help"])), 0);
    let missing = path(dir.path(), "missing.json");
    assert_eq!(run(args(&["solve", "--spec", &missing])), 1);
}

#[test]
fn solve_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, rep) = (path(dir.path(), "t.csv"), path(dir.path(), "r.json"));
    let code = run(args(&["solve", "--problem", "example1", "--trace", &trace, "--report", &rep]));
    assert_eq!(code, 0);
    let rows = read_trace(std::fs::File::open(&trace).unwrap()).unwrap();
    let r = report(&rep);
    assert_eq!(r.status, "converged");
    assert_eq!(rows.len(), r.iterations);
    assert_eq!(r.final_x.len(), 3);
    assert!(r.reference_gap.unwrap() <= 1e-5);
    let header = std::fs::read_to_string(&trace).unwrap();
    assert!(header.starts_with("schema_version,k,step_kind,r,merit,step_norm,alpha,beta,theta,pi,kkt_residual,oracle_calls"));
}

#[test]
fn restoration_rows_reach_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = path(dir.path(), "t.csv");
    assert_eq!(run(args(&["solve", "--problem", "circle-restoration", "--trace", &trace])), 0);
    let rows = read_trace(std::fs::File::open(&trace).unwrap()).unwrap();
    assert!(rows.iter().any(|r| r.step_kind.is_restoration()));
    assert!(rows.iter().filter(|r| r.step_kind.is_restoration()).all(|r| r.pi.is_some()));
    assert!(rows.iter().any(|r| r.step_kind == StepKind::Serious));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for i in 0..2 {
        let (trace, rep) = (path(dir.path(), &format!("t{i}.csv")), path(dir.path(), &format!("r{i}.json")));
        let code = run(args(&[
            "solve",
            "--problem",
            "toy-linear-coupled",
            "--trace",
            &trace,
            "--report",
            &rep,
        ]));
        assert_eq!(code, 0);
        texts.push((std::fs::read(&trace).unwrap(), std::fs::read(&rep).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn run_spec_drives_a_solve() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, rep) = (path(dir.path(), "spec.json"), path(dir.path(), "r.json"));
    let body = serde_json::json!({
        "schema_version": 1,
        "problem": "example2",
        "overrides": {"tie": "smallest-y3", "eps": 1e-6},
        "report": rep,
    });
    std::fs::write(&spec, body.to_string()).unwrap();
    assert_eq!(run(args(&["solve", "--spec", &spec, "--no-reference"])), 0);
    let r = report(&rep);
    assert_eq!(r.problem, "example2");
    assert!(r.reference_gap.is_none());
    // flags override the file
    assert_eq!(run(args(&["solve", "--spec", &spec, "--max-iters", "1", "--no-reference"])), 2);
    std::fs::write(&spec, r#"{"schema_version":1,"problem":"example2","overrides":{"nope":1}}"#).unwrap();
    assert_eq!(run(args(&["solve", "--spec", &spec])), 1);
}

#[test]
fn sweep_writes_every_point_and_rejects_empty_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "s.csv");
    assert_eq!(run(args(&["sweep", "--problem", "eg1-demo", "--out", &out])), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "schema_version,demo,mu,x,r_mu,r_exact");
    assert_eq!(lines.count(), 3 * 151);

    let empty = path(dir.path(), "empty.csv");
    assert_eq!(run(args(&["sweep", "--problem", "eg1-demo", "--grid", "1:0:0.1", "--out", &empty])), 1);
    assert!(!Path::new(&empty).exists());
    assert_eq!(run(args(&["sweep", "--problem", "example1", "--out", &empty])), 1);
    assert!(!Path::new(&empty).exists());

    let eg2 = path(dir.path(), "eg2.csv");
    let code = run(args(&[
        "sweep", "--problem", "eg2-demo", "--a", "1", "--b", "-1", "--mus", "2,20", "--grid", "-1:1:0.5", "--out", &eg2,
    ]));
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&eg2).unwrap().lines().count(), 1 + 2 * 5);
}

#[test]
fn reference_file_feeds_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    let (refp, rep) = (path(dir.path(), "ref.json"), path(dir.path(), "r.json"));
    assert_eq!(run(args(&["reference", "--problem", "qp-sanity", "--starts", "8", "--out", &refp])), 0);
    assert_eq!(
        run(args(&["solve", "--problem", "qp-sanity", "--reference", &refp, "--report", &rep])),
        0
    );
    let r = report(&rep);
    assert!(r.reference_gap.unwrap() <= 1e-10);
    // a reference for another problem is refused
    assert_eq!(run(args(&["solve", "--problem", "example1", "--reference", &refp])), 1);
    assert_eq!(run(args(&["reference", "--problem", "circle-restoration", "--out", &refp])), 1);
}
