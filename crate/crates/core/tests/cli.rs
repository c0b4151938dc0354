use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lll-sampler");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn small_cnf(dir: &Path) -> String {
    write(dir, "f.cnf", "c two clauses\np cnf 4 2\n1 2 3 0\n-1 2 4 0\n")
}

fn satisfies_small(x: &[Value]) -> bool {
    let x: Vec<u64> = x.iter().map(|v| v.as_u64().unwrap()).collect();
    (x[0] == 1 || x[1] == 1 || x[2] == 1) && (x[0] == 0 || x[1] == 1 || x[3] == 1)
}

#[test]
fn sample_emits_assignment_diagnostics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let f = small_cnf(dir.path());
    let out = run(&["sample", "--input", &f, "--eps", "0.1", "--eta", "0.25", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(satisfies_small(v["assignment"].as_array().unwrap()));
    assert!(v["diagnostics"]["steps"].as_u64().unwrap() > 0);
    let m = &v["manifest"];
    assert_eq!(m["command"], "sample");
    assert_eq!(m["seed"], 42);
    assert_eq!(m["eps"], 0.1);
    assert_eq!(m["eta"], 0.25);
    assert_eq!(m["format"], "cnf");
    assert_eq!(m["input"], f.as_str());
    assert_eq!(m["overrides"]["c_t"], 1.0);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let f = small_cnf(dir.path());
    for args in [
        vec!["sample", "--input", &f, "--seed", "9", "--count", "6"],
        vec!["count", "--input", &f, "--seed", "9", "--no-exact-fallback", "--delta", "0.5"],
        vec!["find", "--input", &f, "--seed", "9"],
        vec!["check-projection", "--input", &f, "--seed", "9"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn fan_out_is_ordered_by_chain() {
    let dir = tempfile::tempdir().unwrap();
    let f = small_cnf(dir.path());
    let v = json(&run(&["sample", "--input", &f, "--seed", "3", "--count", "5", "--scheme", "identity"]));
    let samples = v["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 5);
    for (j, s) in samples.iter().enumerate() {
        assert_eq!(s["chain"], j);
        assert!(satisfies_small(s["assignment"].as_array().unwrap()));
    }
    // chain j of a fan-out is the single run with the same seed when j = 0
    let single = json(&run(&["sample", "--input", &f, "--seed", "3", "--scheme", "identity"]));
    assert_eq!(single["assignment"], samples[0]["assignment"]);
}

#[test]
fn generated_seed_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let f = small_cnf(dir.path());
    let v = json(&run(&["find", "--input", &f]));
    let seed = v["manifest"]["seed"].as_u64().expect("seed present");
    let again = json(&run(&["find", "--input", &f, "--seed", &seed.to_string()]));
    assert_eq!(v, again);
}

#[test]
fn check_projection_on_hypergraph() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.hyp", "# path\n0 1\n1 2\n2 3\n");
    let out = run(&["check-projection", "--input", &g, "--format", "hypergraph", "--q", "16", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["report"]["case"], "case1");
    for key in ["a1", "a2", "a3", "a4", "zeta", "max_degree"] {
        assert!(!v["report"][key].is_null(), "missing {key}");
    }
    assert_eq!(v["admissible"], false);
    assert_eq!(v["manifest"]["q"], 16);
    assert_eq!(v["manifest"]["format"], "hypergraph");
    // the emitted scheme loads back as a scheme file
    let scheme = write(dir.path(), "s.json", &v["projection"].to_string());
    let again = json(&run(&["check-projection", "--input", &g, "--q", "16", "--scheme-file", &scheme, "--seed", "1"]));
    assert_eq!(again["report"], v["report"]);
    assert_eq!(again["manifest"]["scheme"]["source"], "file");
}

#[test]
fn forced_component_returns_i1() {
    let dir = tempfile::tempdir().unwrap();
    // a chain of 3000 overlapping clauses under a scheme that projects every
    // variable to one block: all constraints stay unsatisfied in one component
    let mut cnf = String::from("p cnf 3002 3000\n");
    for i in 1..=3000 {
        cnf.push_str(&format!("{} {} {} 0\n", i, i + 1, i + 2));
    }
    let f = write(dir.path(), "unsat-forced-component.cnf", &cnf);
    let blocks = vec![vec![vec![0, 1]]; 3002];
    let scheme = serde_json::json!({ "case": "custom", "kappa": 50.0, "eta": 0.25, "blocks": blocks });
    let s = write(dir.path(), "full.json", &scheme.to_string());
    let out = run(&["sample", "--input", &f, "--scheme-file", &s, "--eps", "0.1", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["error"], "I1");
    assert_eq!(v["manifest"]["seed"], 1);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = small_cnf(dir.path());
    let bad = write(dir.path(), "bad.cnf", "p cnf 2 1\n1 7 0\n");
    let g = write(dir.path(), "g.hyp", "0 1\n");
    let cases: Vec<Vec<&str>> = vec![
        vec!["sample", "--input", &f, "--unknown-flag"],
        vec!["sample", "--input", "/nonexistent/x.cnf"],
        vec!["sample", "--input", &bad],
        vec!["sample", "--input", &f, "--eps", "2"],
        vec!["sample", "--input", &f, "--eta", "0.7"],
        vec!["check-projection", "--input", &g, "--format", "hypergraph"],
        vec!["sample", "--input", &f, "--scheme", "strict", "--seed", "1"],
        vec!["count", "--input", &f, "--delta", "0"],
        vec!["verify", "--instance", "no-such-instance"],
        vec!["bogus-command"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}: no diagnostic");
        assert!(out.stdout.is_empty(), "{args:?}: unexpected stdout");
    }
}

#[test]
fn env_overrides_reach_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let f = small_cnf(dir.path());
    let out = run_env(
        &["count", "--input", &f, "--seed", "4", "--delta", "0.5"],
        &[("LLL_C_T", "0.5"), ("LLL_COUNT_THETA", "0.25"), ("LLL_COUNT_CN", "8")],
    );
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let o = &v["manifest"]["overrides"];
    assert_eq!(o["c_t"], 0.5);
    assert_eq!(o["count_theta"], 0.25);
    assert_eq!(o["count_cn"], 8.0);
    assert_eq!(v["config"]["c_n"], 8.0);
    assert_eq!(v["estimate"], 12.0);

    let sampled = json(&run_env(&["sample", "--input", &f, "--seed", "4"], &[("LLL_C_T", "0.5")]));
    let full = json(&run(&["sample", "--input", &f, "--seed", "4"]));
    assert!(sampled["diagnostics"]["steps"].as_u64() < full["diagnostics"]["steps"].as_u64());
}

#[test]
fn count_without_fallback_is_close() {
    let dir = tempfile::tempdir().unwrap();
    let f = small_cnf(dir.path());
    let out = run(&["count", "--input", &f, "--seed", "11", "--no-exact-fallback", "--scheme", "identity"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let est = v["estimate"].as_f64().unwrap();
    assert!((10.0..=14.4).contains(&est), "{est}");
    assert!(!v["stages"].as_array().unwrap().is_empty());
}

#[test]
fn verify_single_bundled_instance() {
    let out = run(&[
        "verify", "--instance", "clause3", "--samples", "2000", "--draws", "20000", "--tolerance", "0.02", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["instances"][0]["name"], "clause3");
    assert_eq!(v["instances"][0]["solutions"], 7);
}

#[test]
fn pretty_output_is_indented_json_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    let f = small_cnf(dir.path());
    let out = run(&["find", "--input", &f, "--seed", "2", "--pretty"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.contains("\n  \"assignment\""));
    json(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("satisfying assignment"));
}
