use std::path::{Path, PathBuf};
use std::process::Command;

use catmin::cli::run;
use serde_json::Value;

fn fixture(name: &str) -> String {
    fixtures_dir().join(name).display().to_string()
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn catmin(args: &[&str]) -> Run {
    let mut argv = vec!["catmin"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn report(r: &Run) -> Value {
    serde_json::from_str(&r.stdout).unwrap_or_else(|e| panic!("{e}: {}", r.stdout))
}

#[test]
fn counterexample_then_check_saddle() {
    let dir = tempfile::tempdir().unwrap();
    let cx = dir.path().join("cx.json");
    let cx = cx.to_str().unwrap();
    let r = catmin(&["counterexample", "--out", cx]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(report(&r)["verdict"], "PASS");
    let r = catmin(&["check-saddle", "--in", cx]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stderr.contains("check-saddle: PASS"));
}

#[test]
fn narrow_cone_fails_check_cat0() {
    let r = catmin(&["check-cat0", "--in", &fixture("cone5.json")]);
    assert_eq!(r.code, 1);
    assert_eq!(report(&r)["verdict"], "FAIL");
    let r = catmin(&["check-cat0", "--in", &fixture("cone5_wide.json")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
}

#[test]
fn analysis_commands_pass_on_fixtures() {
    for args in [
        vec!["metrics", "--in", "flat.json"],
        vec!["minimize-graph", "--in", "star.json"],
        vec!["build-disc", "--in", "random_graph.json"],
        vec!["key-lemma", "--in", "saddle_sample.json", "--pairs", "200"],
        vec!["solve-fields", "--in", "paraboloid.json"],
        vec!["perturb", "--grid", "17", "--trials", "10"],
    ] {
        let mut full: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        if let Some(k) = full.iter().position(|a| a == "--in") {
            full[k + 1] = fixture(&full[k + 1]);
        }
        let full: Vec<&str> = full.iter().map(|s| s.as_str()).collect();
        let r = catmin(&full);
        assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
        assert_eq!(report(&r)["command"], args[0]);
    }
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"version\": 1,\n  \"target\": [}").unwrap();
    let r = catmin(&["metrics", "--in", bad.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 2"), "{}", r.stderr);

    let r = catmin(&["metrics", "--in", &fixture("star.json")]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("payload"), "{}", r.stderr);

    let r = catmin(&["metrics", "--in", &fixture("flat.json"), "--tol-zero", "-1"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("tol"), "{}", r.stderr);

    assert_eq!(catmin(&["metrics"]).code, 2);
    assert_eq!(catmin(&["metrics", "--in", "no/such/file.json"]).code, 2);
    assert_eq!(catmin(&["no-such-command"]).code, 2);
}

#[test]
fn reports_are_deterministic() {
    let args = ["key-lemma", "--in", &fixture("saddle_sample.json"), "--pairs", "100", "--seed", "3"];
    let a = catmin(&args);
    let b = catmin(&args);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn svg_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("disc.svg");
    let r = catmin(&["build-disc", "--in", &fixture("random_graph.json"), "--svg", svg.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));
}

#[test]
fn binary_finds_fixtures_through_env() {
    let out = Command::new(env!("CARGO_BIN_EXE_catmin"))
        .args(["metrics", "--in", "flat.json"])
        .env("CATMIN_FIXTURES", fixtures_dir())
        .current_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("src"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "PASS");
}
